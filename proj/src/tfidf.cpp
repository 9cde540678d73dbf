#include "kpa/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fmt/format.h"
#include "kpa/corpus.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {

void validate(const FeaturizerConfig& config) {
  if (config.ngram_min < 1 || config.ngram_max < config.ngram_min) {
    fail(ErrorCode::SpecInvalid, "n-gram range must satisfy 1 <= min <= max");
  }
  if (config.max_vocabulary && *config.max_vocabulary == 0) fail(ErrorCode::SpecInvalid, "vocabulary cap must be > 0");
  stopwords_by_id(config.stopwords);
}

std::vector<std::string> ngram_terms(std::span<const std::string> tokens, int n_min, int n_max) {
  std::vector<std::string> out;
  for (int n = n_min; n <= n_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
      std::string term = tokens[i];
      for (std::size_t k = 1; k < len; ++k) term += " " + tokens[i + k];
      out.push_back(std::move(term));
    }
  }
  return out;
}

TfidfVectorizer::TfidfVectorizer(FeaturizerConfig config, std::map<std::string, std::uint32_t, std::less<>> vocabulary,
                                 std::vector<double> idf)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)), idf_(std::move(idf)) {
  if (vocabulary_.size() != idf_.size()) fail(ErrorCode::ArtifactCorrupt, "vocabulary and idf sizes differ");
}

std::vector<std::string> TfidfVectorizer::terms(std::string_view document) const {
  const auto tokens = tokenize_and_filter(document, stopwords_by_id(config_.stopwords));
  return ngram_terms(tokens, config_.ngram_min, config_.ngram_max);
}

TfidfVectorizer TfidfVectorizer::fit(std::span<const std::string> documents, const FeaturizerConfig& config) {
  validate(config);
  TfidfVectorizer probe(config, {}, {});
  std::map<std::string, std::size_t, std::less<>> df;
  for (const auto& doc : documents) {
    const auto t = probe.terms(doc);
    for (const auto& term : std::set<std::string>(t.begin(), t.end())) ++df[term];
  }
  if (df.empty()) fail(ErrorCode::EmptyVocabulary, "all tokens were filtered out");

  std::vector<std::pair<std::string, std::size_t>> kept(df.begin(), df.end());
  if (config.max_vocabulary && kept.size() > *config.max_vocabulary) {
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    kept.resize(*config.max_vocabulary);
    std::sort(kept.begin(), kept.end());
  }
  std::map<std::string, std::uint32_t, std::less<>> vocabulary;
  std::vector<double> idf;
  const double n = static_cast<double>(documents.size());
  for (const auto& [term, count] : kept) {
    vocabulary.emplace(term, static_cast<std::uint32_t>(idf.size()));
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return TfidfVectorizer(config, std::move(vocabulary), std::move(idf));
}

SparseRow TfidfVectorizer::transform(std::string_view document) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& term : terms(document)) {
    const auto it = vocabulary_.find(term);
    if (it != vocabulary_.end()) counts[it->second] += 1.0;
  }
  SparseRow row;
  double norm = 0;
  for (const auto& [col, tf] : counts) {
    const double w = tf * idf_[col];
    row.emplace_back(col, w);
    norm += w * w;
  }
  if (norm > 0) {
    norm = std::sqrt(norm);
    for (auto& [col, w] : row) w /= norm;
  }
  return row;
}

std::vector<SparseRow> TfidfVectorizer::transform(std::span<const std::string> documents) const {
  std::vector<SparseRow> rows;
  rows.reserve(documents.size());
  for (const auto& doc : documents) rows.push_back(transform(doc));
  return rows;
}

std::string TfidfVectorizer::to_tsv() const {
  std::vector<const std::string*> by_index(vocabulary_.size());
  for (const auto& [term, index] : vocabulary_) by_index[index] = &term;
  std::string out;
  for (std::size_t i = 0; i < by_index.size(); ++i) out += fmt::format("{}\t{}\t{:.17g}\n", *by_index[i], i, idf_[i]);
  return out;
}

std::string TfidfVectorizer::fingerprint() const { return sha256_hex(to_tsv()); }

TfidfVectorizer TfidfVectorizer::from_tsv(std::string_view tsv, FeaturizerConfig config) {
  std::map<std::string, std::uint32_t, std::less<>> vocabulary;
  std::vector<double> idf;
  for (const auto& line : split(tsv, '\n')) {
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) fail(ErrorCode::ArtifactCorrupt, "vocabulary line needs 3 fields: " + line);
    const auto index = static_cast<std::uint32_t>(std::stoul(fields[1]));
    if (index != idf.size()) fail(ErrorCode::ArtifactCorrupt, "vocabulary indices are not consecutive");
    vocabulary.emplace(fields[0], index);
    idf.push_back(std::stod(fields[2]));
  }
  return TfidfVectorizer(std::move(config), std::move(vocabulary), std::move(idf));
}

}  // namespace kpa
