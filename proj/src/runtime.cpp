#include "kpa/runtime.hpp"

#include <cmath>
#include <mutex>
#include <new>
#include <set>

#include "kpa/csv.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/native_runtime.hpp"
#include "kpa/stub_runtime.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct CatalogEntry {
  CheckpointRef ref;
  std::string display;
  std::vector<std::string> aliases;
};

const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries{
      {{"bert-base-uncased", ModelFamily::encoder_classifier, "[MASK]", "[SEP]"}, "BERT-base", {"bert-base"}},
      {{"bert-large-uncased", ModelFamily::encoder_classifier, "[MASK]", "[SEP]"}, "BERT-large", {"bert-large"}},
      {{"t5-small", ModelFamily::encoder_decoder, "<extra_id_0>", "</s>"}, "T5-small", {}},
      {{"t5-base", ModelFamily::encoder_decoder, "<extra_id_0>", "</s>"}, "T5-base", {}},
      {{"facebook/bart-large", ModelFamily::encoder_decoder, "<mask>", "</s>"}, "BART-large", {"bart-large"}},
  };
  return entries;
}

bool shape_matches(Task task, const TrainingData& data) {
  switch (task) {
    case Task::pair_classification: return std::holds_alternative<std::vector<PairExample>>(data);
    case Task::prompted_classification: return std::holds_alternative<std::vector<PromptedExample>>(data);
    case Task::conditional_generation: return std::holds_alternative<std::vector<GenerationExample>>(data);
  }
  return false;
}

ordered_json checkpoint_json(const CheckpointRef& ref) {
  return {{"model_id", ref.model_id},
          {"family", to_string(ref.family)},
          {"mask_marker", ref.mask_marker},
          {"sep_marker", ref.sep_marker}};
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, RuntimeFactory, std::less<>> factories;
};

Registry& registry() {
  static Registry reg;
  static std::once_flag defaults;
  std::call_once(defaults, [] {
    reg.factories.emplace("stub", [] { return std::make_unique<StubRuntime>(); });
    reg.factories.emplace("real", [] { return std::make_unique<NativeRuntime>(); });
    reg.factories.emplace("native", [] { return std::make_unique<NativeRuntime>(); });
  });
  return reg;
}

}  // namespace

std::string_view to_string(ModelFamily family) {
  return family == ModelFamily::encoder_classifier ? "encoder_classifier" : "encoder_decoder";
}

ModelFamily parse_model_family(std::string_view name) {
  if (name == "encoder_classifier") return ModelFamily::encoder_classifier;
  if (name == "encoder_decoder") return ModelFamily::encoder_decoder;
  fail(ErrorCode::ConfigInvalid, "unknown model family '" + std::string(name) + "'");
}

const CheckpointRef& checkpoint_by_id(std::string_view id) {
  for (const auto& entry : catalog()) {
    if (entry.ref.model_id == id) return entry.ref;
    for (const auto& alias : entry.aliases) {
      if (alias == id) return entry.ref;
    }
  }
  fail(ErrorCode::UnknownCheckpoint, "unknown checkpoint '" + std::string(id) + "'");
}

std::vector<CheckpointRef> checkpoint_catalog() {
  std::vector<CheckpointRef> refs;
  for (const auto& entry : catalog()) refs.push_back(entry.ref);
  return refs;
}

std::string display_name(const CheckpointRef& ref) {
  for (const auto& entry : catalog()) {
    if (entry.ref.model_id == ref.model_id) return entry.display;
  }
  return ref.model_id;
}

TrainConfig default_train_config(const CheckpointRef& ref, bool soft_prompt) {
  TrainConfig config;
  const std::string& id = ref.model_id;
  if (id == "bert-base-uncased" || id == "bert-large-uncased") {
    config.learning_rate = 2e-5;
    config.epochs = 3;
  } else if (id == "t5-base") {
    config.learning_rate = 1e-4;
    if (soft_prompt) config.soft_prompt_learning_rate = 1e-3;
    config.epochs = 3;
  } else if (id == "t5-small") {
    config.learning_rate = 3e-4;
    config.epochs = 4;
  } else if (id == "facebook/bart-large") {
    config.learning_rate = 2e-5;
    config.epochs = 5;
  }
  return config;
}

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0) || !std::isfinite(config.learning_rate)) {
    fail(ErrorCode::SpecInvalid, "learning_rate must be a positive number");
  }
  if (config.soft_prompt_learning_rate && !(*config.soft_prompt_learning_rate > 0)) {
    fail(ErrorCode::SpecInvalid, "soft_prompt_learning_rate must be positive");
  }
  if (config.epochs < 1) fail(ErrorCode::SpecInvalid, "epochs must be >= 1");
  if (config.batch_size < 1) fail(ErrorCode::SpecInvalid, "batch_size must be >= 1");
  if (config.max_input_length < 1) fail(ErrorCode::SpecInvalid, "max_input_length must be >= 1");
  if (config.max_steps && *config.max_steps < 0) fail(ErrorCode::SpecInvalid, "max_steps must be >= 0");
  if (to_lower_ascii(config.optimizer_name) != "adam") {
    fail(ErrorCode::SpecInvalid, "unsupported optimizer '" + config.optimizer_name + "'");
  }
}

ordered_json to_json(const TrainConfig& config) {
  ordered_json j{{"learning_rate", config.learning_rate},
                 {"soft_prompt_learning_rate", nullptr},
                 {"epochs", config.epochs},
                 {"optimizer", config.optimizer_name},
                 {"batch_size", config.batch_size},
                 {"max_input_length", config.max_input_length},
                 {"seed", config.seed},
                 {"max_steps", nullptr}};
  if (config.soft_prompt_learning_rate) j["soft_prompt_learning_rate"] = *config.soft_prompt_learning_rate;
  if (config.max_steps) j["max_steps"] = *config.max_steps;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig config;
  config.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("soft_prompt_learning_rate") && !j["soft_prompt_learning_rate"].is_null()) {
    config.soft_prompt_learning_rate = j["soft_prompt_learning_rate"].get<double>();
  }
  config.epochs = j.at("epochs").get<int>();
  config.optimizer_name = j.at("optimizer").get<std::string>();
  config.batch_size = j.at("batch_size").get<int>();
  config.max_input_length = j.at("max_input_length").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("max_steps") && !j["max_steps"].is_null()) config.max_steps = j["max_steps"].get<std::int64_t>();
  return config;
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::pair_classification: return "pair_classification";
    case Task::prompted_classification: return "prompted_classification";
    case Task::conditional_generation: return "conditional_generation";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "pair_classification") return Task::pair_classification;
  if (name == "prompted_classification") return Task::prompted_classification;
  if (name == "conditional_generation") return Task::conditional_generation;
  fail(ErrorCode::UnknownTask, "unknown task '" + std::string(name) + "'");
}

std::size_t size_of(const TrainingData& data) {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

void write_artifact_metadata(const ModelArtifact& artifact) {
  write_text_file(artifact.dir / "train_config.json", to_json(artifact.train_config).dump(2) + "\n");
  std::string metrics;
  for (const auto& m : artifact.metrics) {
    ordered_json line{{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"dev_macro_f1", nullptr}};
    if (m.dev_macro_f1) line["dev_macro_f1"] = *m.dev_macro_f1;
    if (m.dev_loss) line["dev_loss"] = *m.dev_loss;
    metrics += line.dump() + "\n";
  }
  write_text_file(artifact.dir / "metrics.jsonl", metrics);
  write_text_file(artifact.dir / "fingerprint.txt", artifact.fingerprint + "\n");
  ordered_json meta{{"runtime", artifact.runtime},
                    {"checkpoint", checkpoint_json(artifact.checkpoint)},
                    {"task", to_string(artifact.task)},
                    {"initial_loss", artifact.initial_loss},
                    {"selected_epoch", nullptr}};
  if (artifact.selected_epoch) meta["selected_epoch"] = *artifact.selected_epoch;
  write_text_file(artifact.dir / "artifact.json", meta.dump(2) + "\n");
}

ModelArtifact read_artifact(const fs::path& dir) {
  ModelArtifact artifact;
  artifact.dir = dir;
  try {
    const json meta = json::parse(read_text_file(dir / "artifact.json"));
    artifact.runtime = meta.at("runtime").get<std::string>();
    const auto& cp = meta.at("checkpoint");
    artifact.checkpoint = {cp.at("model_id").get<std::string>(),
                           parse_model_family(cp.at("family").get<std::string>()),
                           cp.at("mask_marker").get<std::string>(), cp.at("sep_marker").get<std::string>()};
    artifact.task = parse_task(meta.at("task").get<std::string>());
    artifact.initial_loss = meta.at("initial_loss").get<double>();
    if (!meta.at("selected_epoch").is_null()) artifact.selected_epoch = meta["selected_epoch"].get<int>();
    artifact.train_config = train_config_from_json(json::parse(read_text_file(dir / "train_config.json")));
    for (const auto& line : split(read_text_file(dir / "metrics.jsonl"), '\n')) {
      if (trim(line).empty()) continue;
      const json m = json::parse(line);
      EpochMetrics em;
      em.epoch = m.at("epoch").get<int>();
      em.train_loss = m.at("train_loss").get<double>();
      if (!m.at("dev_macro_f1").is_null()) em.dev_macro_f1 = m["dev_macro_f1"].get<double>();
      if (m.contains("dev_loss")) em.dev_loss = m["dev_loss"].get<double>();
      artifact.metrics.push_back(em);
    }
    artifact.fingerprint = std::string(trim(read_text_file(dir / "fingerprint.txt")));
  } catch (const json::exception& e) {
    fail(ErrorCode::ArtifactCorrupt, dir.string() + ": " + e.what());
  }
  return artifact;
}

bool is_special_token(std::string_view token, const CheckpointRef& ref) {
  static const std::set<std::string, std::less<>> common{"<pad>", "</s>", "<s>", "<unk>", "[CLS]",
                                                         "[SEP]", "[PAD]", "[MASK]", "<mask>", "[UNK]"};
  if (token.empty()) return true;
  if (token == ref.mask_marker || token == ref.sep_marker || common.contains(token)) return true;
  return token.starts_with("<extra_id_") && token.ends_with(">");
}

std::map<std::string, double> Model::score_answers(const PromptInstance& instance,
                                                   std::span<const std::string> answer_words) const {
  if (task_ != Task::prompted_classification) {
    fail(ErrorCode::UnknownTask, "score_answers needs a prompted_classification model, got " +
                                     std::string(to_string(task_)));
  }
  const std::string& marker = instance.mask_marker.empty() ? checkpoint_.mask_marker : instance.mask_marker;
  if (count_occurrences(instance.rendered_text, marker) != 1) {
    fail(ErrorCode::NoMaskFound, "instance of " + instance.template_name + " must contain exactly one '" + marker + "'");
  }
  std::vector<std::string> words;
  for (const auto& w : answer_words) {
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  const std::vector<double> scores = do_score_answers(instance, words);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!std::isfinite(scores.at(i))) fail(ErrorCode::DivergedLoss, "non-finite score for '" + words[i] + "'");
    out.emplace(words[i], scores[i]);
  }
  return out;
}

std::string Model::generate(std::string_view source_text, const DecodeOptions& decode) const {
  if (task_ != Task::conditional_generation) {
    fail(ErrorCode::UnknownTask, "generate needs a conditional_generation model, got " + std::string(to_string(task_)));
  }
  if (decode.max_new_tokens < 1) fail(ErrorCode::SpecInvalid, "max_new_tokens must be >= 1");
  if (decode.strategy == DecodeOptions::Strategy::beam && decode.beam_width < 1) {
    fail(ErrorCode::SpecInvalid, "beam width must be >= 1");
  }
  std::vector<std::string> tokens = do_generate(source_text, decode);
  std::erase_if(tokens, [&](const std::string& t) { return is_special_token(t, checkpoint_); });
  if (tokens.empty()) fail(ErrorCode::EmptyGeneration, "generator produced only special tokens");
  if (tokens.size() > static_cast<std::size_t>(decode.max_new_tokens)) {
    tokens.resize(static_cast<std::size_t>(decode.max_new_tokens));
  }
  return detokenize(tokens);
}

ClassPrediction Model::predict_class(std::string_view text_a, std::optional<std::string_view> text_b) const {
  if (task_ != Task::pair_classification) {
    fail(ErrorCode::UnknownTask, "predict_class needs a pair_classification model, got " +
                                     std::string(to_string(task_)));
  }
  const auto p = do_predict_class(text_a, text_b);
  const double total = p[0] + p[1];
  if (!std::isfinite(total) || total <= 0) fail(ErrorCode::DivergedLoss, "non-finite class probabilities");
  ClassPrediction out;
  out.non_match_probability = p[0] / total;
  out.match_probability = p[1] / total;
  out.label = out.match_probability > out.non_match_probability ? 1 : 0;
  return out;
}

ModelArtifact Runtime::finetune(const FinetuneRequest& request) const {
  validate(request.config);
  if (!shape_matches(request.task, request.train) || !shape_matches(request.task, request.dev)) {
    fail(ErrorCode::IncompatibleTask, "examples do not match task " + std::string(to_string(request.task)));
  }
  if (request.task == Task::conditional_generation && request.checkpoint.family != ModelFamily::encoder_decoder) {
    fail(ErrorCode::IncompatibleTask, request.checkpoint.model_id + " cannot be fine-tuned for generation");
  }
  if (request.output_dir.empty()) fail(ErrorCode::SpecInvalid, "finetune needs an output directory");

  TrainedWeights weights;
  try {
    weights = do_finetune(request);
  } catch (const std::bad_alloc&) {
    fail(ErrorCode::ResourceExhausted, "out of memory while fine-tuning " + request.checkpoint.model_id);
  }
  if (!std::isfinite(weights.initial_loss)) fail(ErrorCode::DivergedLoss, "initial loss is not finite");
  for (const auto& m : weights.metrics) {
    if (!std::isfinite(m.train_loss)) fail(ErrorCode::DivergedLoss, "epoch " + std::to_string(m.epoch) + " loss");
  }

  ModelArtifact artifact;
  artifact.runtime = name();
  artifact.checkpoint = request.checkpoint;
  artifact.task = request.task;
  artifact.dir = request.output_dir;
  artifact.train_config = request.config;
  artifact.initial_loss = weights.initial_loss;
  artifact.metrics = std::move(weights.metrics);
  artifact.selected_epoch = weights.selected_epoch;
  fs::create_directories(artifact.dir);
  write_text_file(artifact.weights_path(), weights.blob);
  artifact.fingerprint = sha256_hex(weights.blob);
  write_artifact_metadata(artifact);
  return artifact;
}

std::unique_ptr<Model> Runtime::load(const ModelArtifact& artifact) const {
  if (artifact.runtime != name()) {
    fail(ErrorCode::ArtifactCorrupt, artifact.dir.string() + " was written by runtime '" + artifact.runtime +
                                         "', not '" + name() + "'");
  }
  const std::string blob = read_text_file(artifact.weights_path());
  if (sha256_hex(blob) != artifact.fingerprint) {
    fail(ErrorCode::ArtifactCorrupt, artifact.dir.string() + ": weights do not match fingerprint");
  }
  return do_load(artifact.checkpoint, artifact.task, blob, artifact.train_config);
}

std::unique_ptr<Model> Runtime::open_checkpoint(const CheckpointRef& checkpoint, Task task,
                                                const TrainConfig& config) const {
  return do_load(checkpoint, task, initial_blob(checkpoint, task, config), config);
}

void register_runtime(const std::string& name, RuntimeFactory factory) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  reg.factories[name] = std::move(factory);
}

std::unique_ptr<Runtime> make_runtime(std::string_view name) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  const auto it = reg.factories.find(name);
  if (it == reg.factories.end()) fail(ErrorCode::ConfigInvalid, "unknown runtime '" + std::string(name) + "'");
  return it->second();
}

}  // namespace kpa
