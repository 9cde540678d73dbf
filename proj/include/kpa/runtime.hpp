#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "kpa/prompt.hpp"

namespace kpa {

enum class ModelFamily { encoder_classifier, encoder_decoder };

std::string_view to_string(ModelFamily family);
ModelFamily parse_model_family(std::string_view name);

/// Names an external pre-trained checkpoint and the marker conventions of
/// its tokenizer.
struct CheckpointRef {
  std::string model_id;
  ModelFamily family = ModelFamily::encoder_classifier;
  std::string mask_marker;
  std::string sep_marker;

  friend bool operator==(const CheckpointRef&, const CheckpointRef&) = default;
};

/// Known checkpoints: bert-base-uncased, bert-large-uncased, t5-small,
/// t5-base, facebook/bart-large. Short aliases (bert-base, bart-large, ...)
/// resolve to the same entries.
const CheckpointRef& checkpoint_by_id(std::string_view id);
std::vector<CheckpointRef> checkpoint_catalog();
/// Short display name used in reports: "BERT-base", "T5-small", ...
std::string display_name(const CheckpointRef& ref);

struct TrainConfig {
  double learning_rate = 2e-5;
  /// Rate for soft-prompt parameters when the template has soft tokens.
  std::optional<double> soft_prompt_learning_rate;
  int epochs = 3;
  std::string optimizer_name = "adam";
  int batch_size = 16;
  int max_input_length = 256;
  std::uint64_t seed = 42;
  /// Cap on optimizer steps across all epochs; 0 disables training.
  std::optional<std::int64_t> max_steps;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Fine-tuning hyperparameters per checkpoint (learning rate, epochs,
/// optimizer). For t5-base, `soft_prompt` selects the 1e-3 soft-prompt rate
/// alongside 1e-4 for the model weights.
TrainConfig default_train_config(const CheckpointRef& ref, bool soft_prompt = false);
void validate(const TrainConfig& config);

nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

enum class Task { pair_classification, prompted_classification, conditional_generation };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  std::optional<double> dev_macro_f1;
  std::optional<double> dev_loss;
};

/// A fine-tuned model persisted as a directory: weights.bin,
/// train_config.json, metrics.jsonl, fingerprint.txt and artifact.json.
struct ModelArtifact {
  std::string runtime;
  CheckpointRef checkpoint;
  Task task = Task::pair_classification;
  std::filesystem::path dir;
  TrainConfig train_config;
  double initial_loss = 0;
  std::vector<EpochMetrics> metrics;
  std::optional<int> selected_epoch;
  std::string fingerprint;  // SHA-256 of weights.bin

  std::filesystem::path weights_path() const { return dir / "weights.bin"; }
};

void write_artifact_metadata(const ModelArtifact& artifact);
ModelArtifact read_artifact(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

struct PairExample {
  std::string text_a;
  std::optional<std::string> text_b;
  int label = 0;
};

struct PromptedExample {
  PromptInstance instance;
  std::string target;  // answer word for the mask
};

struct GenerationExample {
  std::string source;
  std::string target;
};

using TrainingData =
    std::variant<std::vector<PairExample>, std::vector<PromptedExample>, std::vector<GenerationExample>>;

std::size_t size_of(const TrainingData& data);

struct DecodeOptions {
  enum class Strategy { greedy, beam };
  Strategy strategy = Strategy::beam;
  int beam_width = 4;
  int max_new_tokens = 32;
};

struct ClassPrediction {
  int label = 0;
  double match_probability = 0.5;  // P(label = 1)
  double non_match_probability = 0.5;
};

/// Tokens a generator may emit that carry no text (sentinels, padding, ...).
bool is_special_token(std::string_view token, const CheckpointRef& ref);

/// A loaded, immutable model. Public methods check the task and output
/// contracts, then defer to the backend.
class Model {
 public:
  virtual ~Model() = default;

  const CheckpointRef& checkpoint() const { return checkpoint_; }
  Task task() const { return task_; }

  /// One finite score per distinct answer word: the per-token average
  /// log-probability of the word in the mask position.
  std::map<std::string, double> score_answers(const PromptInstance& instance,
                                              std::span<const std::string> answer_words) const;

  /// Non-empty text of at most max_new_tokens surface tokens.
  std::string generate(std::string_view source_text, const DecodeOptions& decode) const;

  ClassPrediction predict_class(std::string_view text_a, std::optional<std::string_view> text_b = std::nullopt) const;

 protected:
  Model(CheckpointRef checkpoint, Task task) : checkpoint_(std::move(checkpoint)), task_(task) {}

  virtual std::vector<double> do_score_answers(const PromptInstance& instance,
                                               std::span<const std::string> words) const = 0;
  virtual std::vector<std::string> do_generate(std::string_view source, const DecodeOptions& decode) const = 0;
  /// Probabilities of labels 0 and 1.
  virtual std::array<double, 2> do_predict_class(std::string_view a, std::optional<std::string_view> b) const = 0;

 private:
  CheckpointRef checkpoint_;
  Task task_;
};

/// Rates a model on the dev set after each epoch (higher is better).
using DevEvaluator = std::function<std::optional<double>(const Model&)>;

struct FinetuneRequest {
  CheckpointRef checkpoint;
  Task task = Task::pair_classification;
  TrainingData train;
  TrainingData dev;
  TrainConfig config;
  std::filesystem::path output_dir;
  DevEvaluator dev_evaluator;
};

/// What a backend hands back from training; the base class persists it.
struct TrainedWeights {
  std::string blob;
  double initial_loss = 0;
  std::vector<EpochMetrics> metrics;
  std::optional<int> selected_epoch;
};

class Runtime {
 public:
  virtual ~Runtime() = default;
  virtual std::string name() const = 0;

  ModelArtifact finetune(const FinetuneRequest& request) const;
  std::unique_ptr<Model> load(const ModelArtifact& artifact) const;
  /// The untrained checkpoint, as training would start from it.
  std::unique_ptr<Model> open_checkpoint(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const;

 protected:
  virtual TrainedWeights do_finetune(const FinetuneRequest& request) const = 0;
  virtual std::unique_ptr<Model> do_load(const CheckpointRef& checkpoint, Task task, const std::string& blob,
                                         const TrainConfig& config) const = 0;
  virtual std::string initial_blob(const CheckpointRef& checkpoint, Task task, const TrainConfig& config) const = 0;
};

using RuntimeFactory = std::function<std::unique_ptr<Runtime>()>;

/// Pluggable resolver; "stub" and "real" are registered by default.
void register_runtime(const std::string& name, RuntimeFactory factory);
std::unique_ptr<Runtime> make_runtime(std::string_view name);

}  // namespace kpa
