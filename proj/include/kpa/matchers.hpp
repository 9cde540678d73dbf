#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpa/corpus.hpp"
#include "kpa/evaluation.hpp"
#include "kpa/prompt.hpp"
#include "kpa/runtime.hpp"

namespace kpa {

enum class MatcherKind { baseline, prompted };

std::string_view to_string(MatcherKind kind);
MatcherKind parse_matcher_kind(std::string_view name);

struct MatcherSpec {
  std::string name;
  MatcherKind kind = MatcherKind::baseline;
  CheckpointRef checkpoint;
  std::optional<PromptTemplate> prompt_template;  // prompted only
  std::optional<Verbalizer> verbalizer;           // prompted only
  TrainConfig train_config;
};

/// SpecInvalid unless a prompted spec carries a one-answer-slot template
/// and a verbalizer, and a baseline spec carries neither.
void validate(const MatcherSpec& spec);

/// Template bindings for a record: X1 (and X) = argument, X2 = key point.
Bindings record_bindings(const PromptTemplate& tmpl, const ArgKPRecord& record);

/// Fine-tunes either path; dev macro-F1 is logged per epoch and the best
/// dev epoch is kept.
ModelArtifact train_matcher(const Runtime& runtime, const MatcherSpec& spec, std::span<const ArgKPRecord> train,
                            std::span<const ArgKPRecord> dev, const std::filesystem::path& output_dir);

/// One prediction per record, in order. KindMismatch when the model was not
/// trained for the spec's path.
std::vector<Prediction> predict_matcher(const Model& model, const MatcherSpec& spec,
                                        std::span<const ArgKPRecord> records, double threshold = 0.5);

std::string predictions_jsonl(std::span<const Prediction> predictions, std::string_view spec_name,
                              std::string_view split_name);
std::vector<Prediction> parse_predictions_jsonl(std::string_view text);

}  // namespace kpa
