#pragma once

// Reference implementations written directly from the formulas, sharing no
// code with the library.

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kpa::testing {

/// F1 of class k is 2tp / (2tp + fp + fn), or 0 when that denominator is 0.
/// The mean of the two fractions is put over a common denominator and
/// divided once, so the result is the correctly rounded rational.
inline double macro_f1_oracle(const std::vector<int>& pred, const std::vector<int>& gold) {
  long long num[2], den[2];
  for (int k = 0; k < 2; ++k) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      tp += pred[i] == k && gold[i] == k;
      fp += pred[i] == k && gold[i] != k;
      fn += pred[i] != k && gold[i] == k;
    }
    num[k] = 2 * tp;
    den[k] = 2 * tp + fp + fn;
  }
  if (den[0] == 0 && den[1] == 0) return 0.0;
  if (den[0] == 0) return static_cast<double>(num[1]) / static_cast<double>(2 * den[1]);
  if (den[1] == 0) return static_cast<double>(num[0]) / static_cast<double>(2 * den[0]);
  return static_cast<double>(num[0] * den[1] + num[1] * den[0]) / static_cast<double>(2 * den[0] * den[1]);
}

/// Exhaustive scan over i/100: best macro-F1, then closest to 0.5, then smaller.
inline double threshold_oracle(const std::vector<double>& probs, const std::vector<int>& gold) {
  double best_t = 0, best_f = -1;
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    std::vector<int> pred;
    for (double p : probs) pred.push_back(p > t ? 1 : 0);
    const double f = macro_f1_oracle(pred, gold);
    const bool better = f > best_f || (f == best_f && std::abs(t - 0.5) < std::abs(best_t - 0.5));
    if (better) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

/// Smoothed tf-idf over whitespace tokens with L2-normalized rows.
/// `vocab` receives the sorted term list that indexes the columns.
inline std::vector<std::vector<double>> tfidf_oracle(const std::vector<std::string>& docs,
                                                     std::vector<std::string>& vocab) {
  std::vector<std::vector<std::string>> tokens;
  std::set<std::string> terms;
  for (const auto& d : docs) {
    std::istringstream in(d);
    std::vector<std::string> t;
    for (std::string w; in >> w;) t.push_back(w);
    terms.insert(t.begin(), t.end());
    tokens.push_back(t);
  }
  vocab.assign(terms.begin(), terms.end());
  const long double n = static_cast<long double>(docs.size());
  std::vector<long double> idf;
  for (const auto& term : vocab) {
    long double df = 0;
    for (const auto& t : tokens) df += std::count(t.begin(), t.end(), term) > 0 ? 1 : 0;
    idf.push_back(std::log((1 + n) / (1 + df)) + 1);
  }
  std::vector<std::vector<double>> rows;
  for (const auto& t : tokens) {
    std::vector<long double> w(vocab.size());
    long double norm = 0;
    for (std::size_t j = 0; j < vocab.size(); ++j) {
      w[j] = static_cast<long double>(std::count(t.begin(), t.end(), vocab[j])) * idf[j];
      norm += w[j] * w[j];
    }
    std::vector<double> row;
    for (auto x : w) row.push_back(static_cast<double>(norm > 0 ? x / std::sqrt(norm) : 0));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace kpa::testing
