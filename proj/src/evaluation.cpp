#include "kpa/evaluation.hpp"

#include <cmath>
#include <set>

#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

using nlohmann::ordered_json;

ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassScores s;
  const auto d = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  s.precision = d(tp, tp + fp);
  s.recall = d(tp, tp + fn);
  s.f1 = d(2 * tp, 2 * tp + fp + fn);
  return s;
}

}  // namespace

std::vector<Prediction> apply_threshold(std::span<const Prediction> predictions, double threshold) {
  std::vector<Prediction> out(predictions.begin(), predictions.end());
  for (auto& p : out) {
    if (!p.match_probability) fail(ErrorCode::MissingProbability, "prediction " + p.pair_id + " has no probability");
    p.label = threshold_label(*p.match_probability, threshold);
  }
  return out;
}

GoldLabels gold_labels(std::span<const ArgKPRecord> records) {
  GoldLabels gold;
  for (const auto& r : records) gold.emplace(r.pair_id, r.label);
  return gold;
}

EvalReport macro_f1(std::span<const Prediction> predictions, const GoldLabels& gold, double threshold_used) {
  if (predictions.empty()) fail(ErrorCode::EmptyInput, "no predictions to score");
  EvalReport r;
  r.n = predictions.size();
  r.threshold_used = threshold_used;
  for (const auto& p : predictions) {
    const auto it = gold.find(p.pair_id);
    if (it == gold.end()) fail(ErrorCode::MissingGold, "no gold label for pair " + p.pair_id);
    const bool predicted = p.label == 1;
    const bool actual = it->second == 1;
    if (predicted && actual) ++r.confusion.tp;
    else if (predicted) ++r.confusion.fp;
    else if (actual) ++r.confusion.fn;
    else ++r.confusion.tn;
  }
  const auto& c = r.confusion;
  r.per_class[1] = class_scores(c.tp, c.fp, c.fn);
  r.per_class[0] = class_scores(c.tn, c.fn, c.fp);

  // (2tn/d0 + 2tp/d1) / 2 over a common denominator.
  const std::uint64_t d0 = 2 * c.tn + c.fn + c.fp;
  const std::uint64_t d1 = 2 * c.tp + c.fp + c.fn;
  if (d0 == 0) {
    r.macro_f1 = static_cast<double>(c.tp) / static_cast<double>(d1);
  } else if (d1 == 0) {
    r.macro_f1 = static_cast<double>(c.tn) / static_cast<double>(d0);
  } else {
    const std::uint64_t num = 2 * c.tn * d1 + 2 * c.tp * d0;
    r.macro_f1 = static_cast<double>(num) / static_cast<double>(2 * d0 * d1);
  }
  return r;
}

ordered_json to_json(const EvalReport& r) {
  ordered_json per_class = ordered_json::object();
  for (std::size_t label = 0; label < 2; ++label) {
    per_class[std::to_string(label)] = {{"precision", r.per_class[label].precision},
                                        {"recall", r.per_class[label].recall},
                                        {"f1", r.per_class[label].f1}};
  }
  return {{"macro_f1", r.macro_f1},
          {"per_class", per_class},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
          {"n", r.n},
          {"threshold_used", r.threshold_used}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.macro_f1 = j.at("macro_f1").get<double>();
  for (std::size_t label = 0; label < 2; ++label) {
    const auto& pc = j.at("per_class").at(std::to_string(label));
    r.per_class[label] = {pc.at("precision").get<double>(), pc.at("recall").get<double>(), pc.at("f1").get<double>()};
  }
  const auto& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                 c.at("tn").get<std::size_t>()};
  r.n = j.at("n").get<std::size_t>();
  r.threshold_used = j.at("threshold_used").get<double>();
  return r;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  return grid;
}

ThresholdChoice learn_threshold(std::span<const Prediction> dev_predictions, const GoldLabels& gold,
                                std::span<const double> grid) {
  if (grid.empty()) fail(ErrorCode::SpecInvalid, "threshold grid is empty");
  for (const auto& p : dev_predictions) {
    if (!p.match_probability) fail(ErrorCode::MissingProbability, "prediction " + p.pair_id + " has no probability");
  }
  std::optional<ThresholdChoice> best;
  for (const double t : grid) {
    const ThresholdChoice candidate{t, macro_f1(apply_threshold(dev_predictions, t), gold, t).macro_f1};
    if (!best || candidate.dev_macro_f1 > best->dev_macro_f1) {
      best = candidate;
      continue;
    }
    if (candidate.dev_macro_f1 < best->dev_macro_f1) continue;
    const double dc = std::abs(t - 0.5);
    const double db = std::abs(best->threshold - 0.5);
    if (dc < db || (dc == db && t < best->threshold)) best = candidate;
  }
  return *best;
}

ThresholdChoice learn_threshold(std::span<const Prediction> dev_predictions, const GoldLabels& gold) {
  const auto grid = default_threshold_grid();
  return learn_threshold(dev_predictions, gold, grid);
}

std::string normalize_for_comparison(std::string_view text) { return to_lower_ascii(collapse_whitespace(text)); }

double token_jaccard(std::string_view a, std::string_view b) {
  const auto ta = word_tokens(a);
  const auto tb = word_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

ordered_json to_json(const DivergenceReport& report) {
  ordered_json examples = ordered_json::array();
  for (const auto& e : report.examples) {
    examples.push_back({{"pair_id", e.pair_id},
                        {"argument", e.argument},
                        {"positive_output", e.positive_output},
                        {"negative_output", e.negative_output}});
  }
  return {{"n_pairs", report.n_pairs},
          {"exact_match_fraction", report.exact_match_fraction},
          {"normalized_similarity_mean", report.normalized_similarity_mean},
          {"examples", examples}};
}

}  // namespace kpa
