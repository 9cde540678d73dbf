#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "kpa/corpus.hpp"

namespace kpa {

struct Prediction {
  std::string pair_id;
  int label = 0;
  std::optional<double> match_probability;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Strict rule: a pair is matched only when its probability exceeds the
/// threshold.
inline int threshold_label(double probability, double threshold) { return probability > threshold ? 1 : 0; }

/// Relabels predictions under a new threshold.
std::vector<Prediction> apply_threshold(std::span<const Prediction> predictions, double threshold);

using GoldLabels = std::unordered_map<std::string, int>;
GoldLabels gold_labels(std::span<const ArgKPRecord> records);

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Counts with label 1 as the positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct EvalReport {
  std::array<ClassScores, 2> per_class{};
  double macro_f1 = 0;
  Confusion confusion;
  std::size_t n = 0;
  double threshold_used = 0.5;
};

/// Per-class F1 with F1 = 0 when precision + recall = 0; macro is their
/// mean, computed as one correctly rounded rational division.
EvalReport macro_f1(std::span<const Prediction> predictions, const GoldLabels& gold, double threshold_used = 0.5);
nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// 0.00, 0.01, ..., 1.00
std::vector<double> default_threshold_grid();

struct ThresholdChoice {
  double threshold = 0.5;
  double dev_macro_f1 = 0;
};

/// Grid value maximizing dev macro-F1; ties go to the value nearest 0.5,
/// then to the smaller value.
ThresholdChoice learn_threshold(std::span<const Prediction> dev_predictions, const GoldLabels& gold,
                                std::span<const double> grid);
ThresholdChoice learn_threshold(std::span<const Prediction> dev_predictions, const GoldLabels& gold);

// ---------------------------------------------------------------------------

struct DivergenceExample {
  std::string pair_id;
  std::string argument;
  std::string positive_output;
  std::string negative_output;
};

struct DivergenceReport {
  std::size_t n_pairs = 0;
  double exact_match_fraction = 0;
  double normalized_similarity_mean = 0;
  std::vector<DivergenceExample> examples;
};

/// Lower-cased, whitespace-collapsed text used for exact-match comparison.
std::string normalize_for_comparison(std::string_view text);
/// Jaccard overlap of word-token sets; 1 when both are empty.
double token_jaccard(std::string_view a, std::string_view b);

nlohmann::ordered_json to_json(const DivergenceReport& report);

}  // namespace kpa
