#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "kpa/tfidf.hpp"

namespace kpa {

/// Multinomial naive Bayes with add-one smoothing over tf-idf weights.
struct NaiveBayes {
  std::array<double, 2> log_prior{};
  std::vector<std::array<double, 2>> log_likelihood;  // per feature

  static NaiveBayes fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features);
  /// Posterior of label 1. A row without features falls back to the prior.
  double probability(const SparseRow& row) const;
};

/// Linear SVM, L2-regularized hinge loss solved by dual coordinate descent,
/// with a constant bias feature. Probability is the logistic of
/// the signed margin.
struct LinearSvm {
  std::vector<double> weights;
  double bias = 0;

  static LinearSvm fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features,
                       double c = 1.0, int max_iterations = 1000, double tolerance = 1e-6);
  double margin(const SparseRow& row) const;
  double probability(const SparseRow& row) const;
};

/// CART with Gini impurity, unlimited depth and a minimum leaf size.
/// A row goes left when its feature value is <= the threshold.
struct DecisionTree {
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double p1 = 0;  // share of label-1 training rows reaching the node
    std::size_t samples = 0;
  };
  std::vector<Node> nodes;

  static DecisionTree fit(std::span<const SparseRow> rows, std::span<const int> labels, std::size_t n_features,
                          std::size_t min_leaf = 2);
  double probability(const SparseRow& row) const;
};

using Learner = std::variant<NaiveBayes, LinearSvm, DecisionTree>;

double learner_probability(const Learner& learner, const SparseRow& row);
nlohmann::ordered_json learner_to_json(const Learner& learner);
Learner learner_from_json(const nlohmann::json& j);

}  // namespace kpa
