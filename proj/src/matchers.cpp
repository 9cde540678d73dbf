#include "kpa/matchers.hpp"

#include "json.hpp"
#include "kpa/error.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

Task task_for(MatcherKind kind) {
  return kind == MatcherKind::baseline ? Task::pair_classification : Task::prompted_classification;
}

}  // namespace

std::string_view to_string(MatcherKind kind) { return kind == MatcherKind::baseline ? "baseline" : "prompted"; }

MatcherKind parse_matcher_kind(std::string_view name) {
  if (name == "baseline") return MatcherKind::baseline;
  if (name == "prompted") return MatcherKind::prompted;
  fail(ErrorCode::ConfigInvalid, "unknown matcher kind '" + std::string(name) + "'");
}

void validate(const MatcherSpec& spec) {
  validate(spec.train_config);
  if (spec.kind == MatcherKind::baseline) {
    if (spec.prompt_template || spec.verbalizer) {
      fail(ErrorCode::SpecInvalid, spec.name + ": a baseline matcher takes no template or verbalizer");
    }
    return;
  }
  if (!spec.prompt_template || !spec.verbalizer) {
    fail(ErrorCode::SpecInvalid, spec.name + ": a prompted matcher needs a template and a verbalizer");
  }
  if (spec.prompt_template->answer_slot_count() != 1) {
    fail(ErrorCode::SpecInvalid, spec.name + ": template " + spec.prompt_template->name() +
                                     " must have exactly one answer slot");
  }
  const auto& words = spec.verbalizer->label_words();
  if (!words.contains(0) || !words.contains(1)) {
    fail(ErrorCode::SpecInvalid, spec.name + ": verbalizer must cover labels 0 and 1");
  }
}

Bindings record_bindings(const PromptTemplate& tmpl, const ArgKPRecord& record) {
  Bindings b;
  for (const SlotId slot : tmpl.input_slots()) {
    b[slot] = slot == SlotId::X2 ? record.key_point : record.argument;
  }
  return b;
}

ModelArtifact train_matcher(const Runtime& runtime, const MatcherSpec& spec, std::span<const ArgKPRecord> train,
                            std::span<const ArgKPRecord> dev, const std::filesystem::path& output_dir) {
  validate(spec);
  if (train.empty()) fail(ErrorCode::EmptySplit, spec.name + ": train split is empty");
  if (dev.empty()) fail(ErrorCode::EmptySplit, spec.name + ": dev split is empty");

  FinetuneRequest request;
  request.checkpoint = spec.checkpoint;
  request.task = task_for(spec.kind);
  request.config = spec.train_config;
  request.output_dir = output_dir;
  if (spec.kind == MatcherKind::baseline) {
    const auto pairs = [](std::span<const ArgKPRecord> records) {
      std::vector<PairExample> out;
      for (const auto& r : records) out.push_back({r.argument, r.key_point, r.label});
      return out;
    };
    request.train = pairs(train);
    request.dev = pairs(dev);
  } else {
    const auto prompted = [&](std::span<const ArgKPRecord> records) {
      std::vector<PromptedExample> out;
      for (const auto& r : records) {
        out.push_back({render(*spec.prompt_template, record_bindings(*spec.prompt_template, r),
                              spec.checkpoint.mask_marker),
                       spec.verbalizer->target_word(r.label)});
      }
      return out;
    };
    request.train = prompted(train);
    request.dev = prompted(dev);
  }
  const GoldLabels gold = gold_labels(dev);
  const std::vector<ArgKPRecord> dev_records(dev.begin(), dev.end());
  request.dev_evaluator = [spec, gold, dev_records](const Model& model) -> std::optional<double> {
    return macro_f1(predict_matcher(model, spec, dev_records), gold).macro_f1;
  };
  return runtime.finetune(request);
}

std::vector<Prediction> predict_matcher(const Model& model, const MatcherSpec& spec,
                                        std::span<const ArgKPRecord> records, double threshold) {
  if (model.task() != task_for(spec.kind)) {
    fail(ErrorCode::KindMismatch, spec.name + ": model task " + std::string(to_string(model.task())) +
                                      " does not serve a " + std::string(to_string(spec.kind)) + " matcher");
  }
  if (spec.kind == MatcherKind::prompted) validate(spec);
  std::vector<Prediction> out;
  out.reserve(records.size());
  std::vector<std::string> words;
  if (spec.verbalizer) words = spec.verbalizer->all_words();
  for (const auto& r : records) {
    double p = 0.5;
    if (spec.kind == MatcherKind::baseline) {
      p = model.predict_class(r.argument, r.key_point).match_probability;
    } else {
      const PromptInstance instance =
          render(*spec.prompt_template, record_bindings(*spec.prompt_template, r), model.checkpoint().mask_marker);
      p = verbalize(model.score_answers(instance, words), *spec.verbalizer).match_probability;
    }
    out.push_back({r.pair_id, threshold_label(p, threshold), p});
  }
  return out;
}

std::string predictions_jsonl(std::span<const Prediction> predictions, std::string_view spec_name,
                              std::string_view split_name) {
  std::string out;
  for (const auto& p : predictions) {
    nlohmann::ordered_json line{{"pair_id", p.pair_id},
                                {"label", p.label},
                                {"match_probability", nullptr},
                                {"spec_name", spec_name},
                                {"split_name", split_name}};
    if (p.match_probability) line["match_probability"] = *p.match_probability;
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<Prediction> parse_predictions_jsonl(std::string_view text) {
  std::vector<Prediction> out;
  for (const auto& line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Prediction p{j.at("pair_id").get<std::string>(), j.at("label").get<int>(), std::nullopt};
    if (!j.at("match_probability").is_null()) p.match_probability = j["match_probability"].get<double>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace kpa
