#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kpa/corpus.hpp"
#include "kpa/generation.hpp"
#include "kpa/matchers.hpp"
#include "kpa/runtime.hpp"
#include "kpa/triple_classifiers.hpp"

namespace kpa {

enum class Approach { baseline, approach1, approach2 };

std::string_view to_string(Approach approach);
Approach parse_approach(std::string_view name);

struct GeneratorSpec {
  CheckpointRef checkpoint;
  std::string family = "T6";
  DecodeOptions decode;
  TrainConfig train_config;
};

/// `section.key = value` assignments applied on top of a config file.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses "section.key=value".
std::pair<std::string, std::string> parse_override(std::string_view assignment);

struct ExperimentConfig {
  std::string name;
  Approach approach = Approach::baseline;
  std::string runtime = "real";
  bool threshold_learning = false;
  std::filesystem::path output_dir = "runs";

  std::optional<std::filesystem::path> data_path;
  std::optional<DataFormat> data_format;  // inferred from the path when absent
  bool full_stops = true;
  std::optional<std::filesystem::path> split_dir;  // prepared manifests to reuse

  SplitParameters split;
  std::optional<std::filesystem::path> topic_assignment;

  std::optional<MatcherSpec> matcher;
  std::optional<GeneratorSpec> generator;
  std::optional<TripleClassifierSpec> classifier;

  /// Canonical INI text of the effective configuration (after overrides).
  std::string canonical_text;
  std::string fingerprint() const;
};

/// Sections: [experiment] name approach runtime threshold_learning
/// output_dir; [data] path format full_stops split_dir; [split] mode seed
/// ratios topics assignment; [matcher], [generator], [classifier] with
/// checkpoint/template/verbalizer/family/kind and training keys
/// (learning_rate soft_prompt_learning_rate epochs optimizer batch_size
/// max_input_length max_steps seed). Unknown sections or keys are errors.
ExperimentConfig parse_experiment_config(std::string_view text, const ConfigOverrides& overrides = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

DataFormat infer_data_format(const std::filesystem::path& path);
TopicAssignment read_topic_assignment(const std::filesystem::path& path);

}  // namespace kpa
