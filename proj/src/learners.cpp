#include "kpa/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kpa/error.hpp"

namespace kpa {
namespace {

using nlohmann::ordered_json;

double feature_value(const SparseRow& row, std::uint32_t feature) {
  const auto it = std::lower_bound(row.begin(), row.end(), feature,
                                   [](const auto& entry, std::uint32_t f) { return entry.first < f; });
  return it != row.end() && it->first == feature ? it->second : 0.0;
}

double gini(double n1, double n) {
  if (n == 0) return 0;
  const double p = n1 / n;
  return 2 * p * (1 - p);
}

struct TreeBuilder {
  std::span<const SparseRow> rows;
  std::span<const int> labels;
  std::size_t n_features;
  std::size_t min_leaf;
  DecisionTree tree;

  std::int32_t build(std::vector<std::size_t> idx) {
    const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    double n1 = 0;
    for (const auto i : idx) n1 += labels[i];
    const double n = static_cast<double>(idx.size());
    tree.nodes[node_id].p1 = n1 / n;
    tree.nodes[node_id].samples = idx.size();
    if (n1 == 0 || n1 == n || idx.size() < 2 * min_leaf) return node_id;

    // Per-feature nonzero values of the rows in this node.
    std::map<std::uint32_t, std::vector<std::pair<double, int>>> columns;
    for (const auto i : idx) {
      for (const auto& [f, v] : rows[i]) {
        if (v != 0) columns[f].emplace_back(v, labels[i]);
      }
    }
    const double parent = gini(n1, n);
    double best_gain = 1e-12;
    std::int32_t best_feature = -1;
    double best_threshold = 0;
    for (auto& [f, values] : columns) {
      std::sort(values.begin(), values.end());
      // Rows lacking the feature have value 0 and sit on the left.
      double left_n = n - static_cast<double>(values.size());
      double left_1 = n1;
      for (const auto& v : values) left_1 -= v.second;
      for (std::size_t k = 0; k <= values.size(); ++k) {
        if (k > 0) {
          left_n += 1;
          left_1 += values[k - 1].second;
        }
        const bool boundary = k == values.size() ? false : (k == 0 ? values[0].first > 0 : values[k].first > values[k - 1].first);
        if (!boundary) continue;
        const double right_n = n - left_n;
        if (left_n < static_cast<double>(min_leaf) || right_n < static_cast<double>(min_leaf)) continue;
        const double right_1 = n1 - left_1;
        const double child = (left_n * gini(left_1, left_n) + right_n * gini(right_1, right_n)) / n;
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          best_threshold = k == 0 ? values[0].first / 2 : (values[k - 1].first + values[k].first) / 2;
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (const auto i : idx) {
      (feature_value(rows[i], static_cast<std::uint32_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
    }
    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    const auto l = build(std::move(left));
    const auto r = build(std::move(right));
    tree.nodes[node_id].left = l;
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

template <typename T>
std::vector<T> json_vector(const nlohmann::json& j) {
  return j.get<std::vector<T>>();
}

}  // namespace

NaiveBayes NaiveBayes::fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features) {
  NaiveBayes nb;
  std::array<double, 2> docs{};
  std::array<double, 2> totals{};
  std::vector<std::array<double, 2>> mass(n_features, {0.0, 0.0});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    docs[y] += 1;
    for (const auto& [f, v] : rows[i]) {
      mass[f][y] += v;
      totals[y] += v;
    }
  }
  for (std::size_t y = 0; y < 2; ++y) nb.log_prior[y] = std::log(docs[y] / static_cast<double>(rows.size()));
  nb.log_likelihood.resize(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    for (std::size_t y = 0; y < 2; ++y) {
      nb.log_likelihood[f][y] = std::log((mass[f][y] + 1.0) / (totals[y] + static_cast<double>(n_features)));
    }
  }
  return nb;
}

double NaiveBayes::probability(const SparseRow& row) const {
  std::array<double, 2> score = log_prior;
  for (const auto& [f, v] : row) {
    if (f >= log_likelihood.size()) continue;
    for (std::size_t y = 0; y < 2; ++y) score[y] += v * log_likelihood[f][y];
  }
  return 1.0 / (1.0 + std::exp(score[0] - score[1]));
}

LinearSvm LinearSvm::fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features,
                         double c, int max_iterations, double tolerance) {
  LinearSvm svm;
  svm.weights.assign(n_features, 0.0);
  const std::size_t n = rows.size();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = 1.0;  // bias feature
    for (const auto& [f, v] : rows[i]) q[i] += v * v;
  }
  for (int iter = 0; iter < max_iterations; ++iter) {
    double max_violation = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double g = y * svm.margin(rows[i]) - 1.0;
      double pg = g;
      if (alpha[i] == 0) pg = std::min(g, 0.0);
      else if (alpha[i] == c) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg == 0) continue;
      const double updated = std::clamp(alpha[i] - g / q[i], 0.0, c);
      const double delta = (updated - alpha[i]) * y;
      alpha[i] = updated;
      for (const auto& [f, v] : rows[i]) svm.weights[f] += delta * v;
      svm.bias += delta;
    }
    if (max_violation < tolerance) break;
  }
  return svm;
}

double LinearSvm::margin(const SparseRow& row) const {
  double m = bias;
  for (const auto& [f, v] : row) {
    if (f < weights.size()) m += weights[f] * v;
  }
  return m;
}

double LinearSvm::probability(const SparseRow& row) const { return 1.0 / (1.0 + std::exp(-margin(row))); }

DecisionTree DecisionTree::fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features,
                               std::size_t min_leaf) {
  if (min_leaf < 1) fail(ErrorCode::SpecInvalid, "minimum leaf size must be >= 1");
  TreeBuilder builder{rows, labels, n_features, min_leaf, {}};
  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  builder.build(std::move(all));
  return std::move(builder.tree);
}

double DecisionTree::probability(const SparseRow& row) const {
  if (nodes.empty()) fail(ErrorCode::NotFitted, "decision tree has no nodes");
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const auto& node = nodes[at];
    at = static_cast<std::size_t>(feature_value(row, static_cast<std::uint32_t>(node.feature)) <= node.threshold
                                      ? node.left
                                      : node.right);
  }
  return nodes[at].p1;
}

double learner_probability(const Learner& learner, const SparseRow& row) {
  return std::visit([&](const auto& l) { return l.probability(row); }, learner);
}

ordered_json learner_to_json(const Learner& learner) {
  if (const auto* nb = std::get_if<NaiveBayes>(&learner)) {
    ordered_json ll = ordered_json::array();
    for (const auto& pair : nb->log_likelihood) ll.push_back({pair[0], pair[1]});
    return {{"kind", "naive_bayes"}, {"log_prior", {nb->log_prior[0], nb->log_prior[1]}}, {"log_likelihood", ll}};
  }
  if (const auto* svm = std::get_if<LinearSvm>(&learner)) {
    return {{"kind", "svm"}, {"bias", svm->bias}, {"weights", svm->weights}};
  }
  const auto& tree = std::get<DecisionTree>(learner);
  ordered_json nodes = ordered_json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.p1, n.samples});
  }
  return {{"kind", "decision_tree"}, {"nodes", nodes}};
}

Learner learner_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "naive_bayes") {
      NaiveBayes nb;
      nb.log_prior = {j.at("log_prior").at(0).get<double>(), j.at("log_prior").at(1).get<double>()};
      for (const auto& pair : j.at("log_likelihood")) nb.log_likelihood.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
      return nb;
    }
    if (kind == "svm") {
      LinearSvm svm;
      svm.bias = j.at("bias").get<double>();
      svm.weights = json_vector<double>(j.at("weights"));
      return svm;
    }
    if (kind == "decision_tree") {
      DecisionTree tree;
      for (const auto& n : j.at("nodes")) {
        tree.nodes.push_back({n.at(0).get<std::int32_t>(), n.at(1).get<double>(), n.at(2).get<std::int32_t>(),
                              n.at(3).get<std::int32_t>(), n.at(4).get<double>(), n.at(5).get<std::size_t>()});
      }
      return tree;
    }
    fail(ErrorCode::ArtifactCorrupt, "unknown learner kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ArtifactCorrupt, std::string("learner state: ") + e.what());
  }
}

}  // namespace kpa
