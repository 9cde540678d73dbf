#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kpa/runtime.hpp"

namespace kpa {

/// Captures every text that crosses a stub runtime, for assertions about
/// what the pipelines fed to the model.
class StubRecorder {
 public:
  struct Trace {
    std::vector<std::string> training_sources;
    std::vector<std::string> training_targets;
    std::vector<std::string> generation_sources;
  };

  void record_training(std::string source, std::string target);
  void record_generation(std::string source);
  Trace snapshot() const;
  void clear();

 private:
  mutable std::mutex mutex_;
  Trace trace_;
};

/// Pluggable stub behavior. Each hook is a pure function of its inputs.
struct StubBehavior {
  std::function<double(const PromptInstance&, const std::string& word)> answer_score;
  std::function<std::string(std::string_view source, const CheckpointRef& ref)> generator;
  std::function<double(std::string_view text_a, std::optional<std::string_view> text_b)> match_probability;
};

/// Word-overlap heuristics: the label-1 answer words score higher the more
/// the argument and key point share vocabulary; the generator echoes its
/// source with the mask removed.
StubBehavior default_stub_behavior();
/// Every answer word scores 0 and every pair gets probability 0.5.
StubBehavior uniform_stub_behavior();

/// A runtime with no neural computation. Training records its inputs and
/// reports a constant ln 2 loss per epoch.
class StubRuntime : public Runtime {
 public:
  explicit StubRuntime(StubBehavior behavior = default_stub_behavior(),
                       std::shared_ptr<StubRecorder> recorder = std::make_shared<StubRecorder>());

  std::string name() const override { return "stub"; }
  const std::shared_ptr<StubRecorder>& recorder() const { return recorder_; }

 protected:
  TrainedWeights do_finetune(const FinetuneRequest& request) const override;
  std::unique_ptr<Model> do_load(const CheckpointRef& checkpoint, Task task, const std::string& blob,
                                 const TrainConfig& config) const override;
  std::string initial_blob(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const override;

 private:
  StubBehavior behavior_;
  std::shared_ptr<StubRecorder> recorder_;
};

}  // namespace kpa
