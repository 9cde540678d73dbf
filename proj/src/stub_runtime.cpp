#include "kpa/stub_runtime.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "json.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

using nlohmann::ordered_json;

double token_jaccard(std::string_view a, std::string_view b) {
  const auto ta = word_tokens(a);
  const auto tb = word_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

std::string binding(const PromptInstance& instance, SlotId slot) {
  const auto it = instance.bindings.find(slot);
  return it == instance.bindings.end() ? std::string() : it->second;
}

bool is_match_word(const std::string& word) {
  for (const Verbalizer* v : {&matched_verbalizer(), &yes_no_verbalizer()}) {
    for (const auto& w : v->label_words().at(1)) {
      if (w == word) return true;
    }
  }
  return false;
}

bool is_non_match_word(const std::string& word) {
  for (const Verbalizer* v : {&matched_verbalizer(), &yes_no_verbalizer()}) {
    for (const auto& w : v->label_words().at(0)) {
      if (w == word) return true;
    }
  }
  return false;
}

class StubModel final : public Model {
 public:
  StubModel(CheckpointRef ref, Task task, const StubBehavior& behavior, std::shared_ptr<StubRecorder> recorder)
      : Model(std::move(ref), task), behavior_(behavior), recorder_(std::move(recorder)) {}

 protected:
  std::vector<double> do_score_answers(const PromptInstance& instance,
                                       std::span<const std::string> words) const override {
    std::vector<double> scores;
    for (const auto& w : words) scores.push_back(behavior_.answer_score(instance, w));
    return scores;
  }

  std::vector<std::string> do_generate(std::string_view source, const DecodeOptions&) const override {
    if (recorder_) recorder_->record_generation(std::string(source));
    return surface_tokens(behavior_.generator(source, checkpoint()));
  }

  std::array<double, 2> do_predict_class(std::string_view a, std::optional<std::string_view> b) const override {
    const double p = std::clamp(behavior_.match_probability(a, b), 0.0, 1.0);
    return {1.0 - p, p};
  }

 private:
  StubBehavior behavior_;
  std::shared_ptr<StubRecorder> recorder_;
};

}  // namespace

void StubRecorder::record_training(std::string source, std::string target) {
  std::lock_guard lock(mutex_);
  trace_.training_sources.push_back(std::move(source));
  trace_.training_targets.push_back(std::move(target));
}

void StubRecorder::record_generation(std::string source) {
  std::lock_guard lock(mutex_);
  trace_.generation_sources.push_back(std::move(source));
}

StubRecorder::Trace StubRecorder::snapshot() const {
  std::lock_guard lock(mutex_);
  return trace_;
}

void StubRecorder::clear() {
  std::lock_guard lock(mutex_);
  trace_ = {};
}

StubBehavior default_stub_behavior() {
  StubBehavior b;
  b.answer_score = [](const PromptInstance& instance, const std::string& word) {
    if (is_match_word(word) || is_non_match_word(word)) {
      std::string first = binding(instance, SlotId::X1);
      if (first.empty()) first = binding(instance, SlotId::X);
      const double overlap = token_jaccard(first, binding(instance, SlotId::X2));
      return is_match_word(word) ? 4.0 * overlap - 1.0 : 0.0;
    }
    return -static_cast<double>(fnv1a64(word) % 1000) / 1000.0;
  };
  b.generator = [](std::string_view source, const CheckpointRef& ref) {
    return strip_mask(source, ref.mask_marker);
  };
  b.match_probability = [](std::string_view a, std::optional<std::string_view> text_b) {
    const double overlap = text_b ? token_jaccard(a, *text_b) : 0.0;
    return 1.0 / (1.0 + std::exp(-8.0 * (overlap - 0.25)));
  };
  return b;
}

StubBehavior uniform_stub_behavior() {
  StubBehavior b = default_stub_behavior();
  b.answer_score = [](const PromptInstance&, const std::string&) { return 0.0; };
  b.match_probability = [](std::string_view, std::optional<std::string_view>) { return 0.5; };
  return b;
}

StubRuntime::StubRuntime(StubBehavior behavior, std::shared_ptr<StubRecorder> recorder)
    : behavior_(std::move(behavior)), recorder_(std::move(recorder)) {}

std::string StubRuntime::initial_blob(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const {
  const ordered_json blob{{"runtime", "stub"},
                          {"model_id", checkpoint.model_id},
                          {"task", to_string(task)},
                          {"seed", config.seed},
                          {"trained_examples", 0},
                          {"epochs", 0}};
  return blob.dump() + "\n";
}

TrainedWeights StubRuntime::do_finetune(const FinetuneRequest& request) const {
  if (recorder_) {
    std::visit(
        [&](const auto& examples) {
          for (const auto& ex : examples) {
            using T = std::decay_t<decltype(ex)>;
            if constexpr (std::is_same_v<T, PairExample>) {
              recorder_->record_training(ex.text_a + (ex.text_b ? " " + *ex.text_b : ""), std::to_string(ex.label));
            } else if constexpr (std::is_same_v<T, PromptedExample>) {
              recorder_->record_training(ex.instance.rendered_text, ex.target);
            } else {
              recorder_->record_training(ex.source, ex.target);
            }
          }
        },
        request.train);
  }

  const std::size_t n = size_of(request.train);
  const int epochs = request.config.max_steps && *request.config.max_steps == 0 ? 0 : request.config.epochs;
  ordered_json blob{{"runtime", "stub"},
                    {"model_id", request.checkpoint.model_id},
                    {"task", to_string(request.task)},
                    {"seed", request.config.seed},
                    {"trained_examples", epochs == 0 ? 0 : n},
                    {"epochs", epochs}};

  TrainedWeights out;
  out.blob = epochs == 0 ? initial_blob(request.checkpoint, request.task, request.config) : blob.dump() + "\n";
  out.initial_loss = std::numbers::ln2;
  const StubModel model(request.checkpoint, request.task, behavior_, nullptr);
  std::optional<double> best;
  for (int e = 1; e <= epochs; ++e) {
    EpochMetrics m;
    m.epoch = e;
    m.train_loss = std::numbers::ln2;
    if (request.dev_evaluator) m.dev_macro_f1 = request.dev_evaluator(model);
    if (m.dev_macro_f1 && (!best || *m.dev_macro_f1 > *best)) {
      best = m.dev_macro_f1;
      out.selected_epoch = e;
    }
    out.metrics.push_back(m);
  }
  if (!out.selected_epoch && epochs > 0) out.selected_epoch = epochs;
  return out;
}

std::unique_ptr<Model> StubRuntime::do_load(const CheckpointRef& checkpoint, Task task, const std::string& blob,
                                            const TrainConfig&) const {
  try {
    const auto j = nlohmann::json::parse(blob);
    if (j.at("runtime") != "stub") fail(ErrorCode::ArtifactCorrupt, "weights were not written by the stub runtime");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ArtifactCorrupt, std::string("stub weights: ") + e.what());
  }
  return std::make_unique<StubModel>(checkpoint, task, behavior_, recorder_);
}

}  // namespace kpa
