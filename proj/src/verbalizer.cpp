#include <algorithm>
#include <cmath>
#include <set>

#include "kpa/error.hpp"
#include "kpa/prompt.hpp"

namespace kpa {

Verbalizer::Verbalizer(std::string name, std::map<int, std::vector<std::string>> label_words)
    : name_(std::move(name)), label_words_(std::move(label_words)) {
  for (const int label : {0, 1}) {
    const auto it = label_words_.find(label);
    if (it == label_words_.end() || it->second.empty()) {
      fail(ErrorCode::InvalidVerbalizer, name_ + ": label " + std::to_string(label) + " has no answer words");
    }
  }
  std::set<std::string> seen;
  for (const auto& [label, words] : label_words_) {
    for (const auto& w : words) {
      if (w.empty()) fail(ErrorCode::InvalidVerbalizer, name_ + ": empty answer word");
      if (!seen.insert(w).second) {
        fail(ErrorCode::InvalidVerbalizer, name_ + ": answer word '" + w + "' is used by more than one label");
      }
    }
  }
}

std::vector<std::string> Verbalizer::all_words() const {
  std::vector<std::string> words;
  for (const auto& [_, ws] : label_words_) words.insert(words.end(), ws.begin(), ws.end());
  return words;
}

const std::string& Verbalizer::target_word(int label) const {
  const auto it = label_words_.find(label);
  if (it == label_words_.end()) fail(ErrorCode::InvalidVerbalizer, name_ + ": unknown label " + std::to_string(label));
  return it->second.front();
}

const Verbalizer& matched_verbalizer() {
  static const Verbalizer v("matched", {{0, {"not matched"}}, {1, {"matched"}}});
  return v;
}

const Verbalizer& yes_no_verbalizer() {
  static const Verbalizer v("yes_no", {{0, {"No"}}, {1, {"Yes"}}});
  return v;
}

const Verbalizer& verbalizer_for_template(std::string_view template_name) {
  if (template_name == "T1" || template_name == "T2") return matched_verbalizer();
  if (template_name == "T3" || template_name == "T4" || template_name == "T5") return yes_no_verbalizer();
  fail(ErrorCode::SpecInvalid, "no default verbalizer for template '" + std::string(template_name) + "'");
}

const Verbalizer& verbalizer_by_name(std::string_view name) {
  if (name == "matched") return matched_verbalizer();
  if (name == "yes_no") return yes_no_verbalizer();
  fail(ErrorCode::ConfigInvalid, "unknown verbalizer '" + std::string(name) + "'");
}

Verbalized verbalize(const std::map<std::string, double>& word_scores, const Verbalizer& verbalizer) {
  std::map<int, double> label_score;
  for (const auto& [label, words] : verbalizer.label_words()) {
    double best = -INFINITY;
    for (const auto& w : words) {
      const auto it = word_scores.find(w);
      if (it == word_scores.end()) fail(ErrorCode::MissingWordScore, "no score for answer word '" + w + "'");
      best = std::max(best, it->second);
    }
    label_score[label] = best;
  }
  double top = -INFINITY;
  for (const auto& [_, s] : label_score) top = std::max(top, s);
  double denom = 0;
  for (const auto& [_, s] : label_score) denom += std::exp(s - top);

  Verbalized out;
  out.match_probability = std::exp(label_score.at(1) - top) / denom;
  // Ties go to the lower label, i.e. predict non-match.
  int best_label = label_score.begin()->first;
  for (const auto& [label, s] : label_score) {
    if (s > label_score.at(best_label)) best_label = label;
  }
  out.label = best_label;
  return out;
}

}  // namespace kpa
