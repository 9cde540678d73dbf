#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kpa/corpus.hpp"
#include "kpa/evaluation.hpp"
#include "kpa/experiment_config.hpp"
#include "kpa/runtime.hpp"

namespace kpa {

using RuntimeResolver = std::function<std::unique_ptr<Runtime>(std::string_view name)>;

/// Command-line overrides; each maps onto a config key and so feeds the
/// config fingerprint.
struct RunOptions {
  ConfigOverrides overrides;
  std::optional<std::uint64_t> seed;                 // split.seed
  std::optional<std::filesystem::path> output_dir;   // experiment.output_dir
  std::optional<std::string> runtime;                // experiment.runtime
  std::optional<bool> threshold_learning;            // experiment.threshold_learning
  std::optional<std::filesystem::path> data;         // data.path
  std::optional<std::filesystem::path> split_dir;    // data.split_dir
  RuntimeResolver resolver = make_runtime;

  ConfigOverrides all_overrides() const;
};

struct RunResult {
  std::filesystem::path run_dir;
  nlohmann::ordered_json run_record;
};

/// Records after loading, optional full-stop insertion.
std::vector<ArgKPRecord> load_records(const ExperimentConfig& config);
/// The split a config asks for: prepared manifests when data.split_dir is
/// set, otherwise computed from the split parameters.
SplitTriple make_split(const ExperimentConfig& config, std::span<const ArgKPRecord> records);

/// SHA-256 over the bytes of the data file, or of every CSV file in a
/// three-file directory in name order.
std::string data_fingerprint(const std::filesystem::path& path);

/// Runs one experiment end to end under <output_dir>/<name>/.
RunResult run_experiment(const ExperimentConfig& config, const RuntimeResolver& resolver = make_runtime);
RunResult cmd_run(const std::filesystem::path& config_path, const RunOptions& options);

/// Independent runs on up to `jobs` worker threads; results keep input order.
std::vector<RunResult> cmd_batch(std::span<const std::filesystem::path> config_paths, const RunOptions& options,
                                 int jobs);

struct PrepareOptions {
  std::filesystem::path data;
  std::optional<DataFormat> format;
  SplitParameters params;
  std::optional<std::filesystem::path> assignment;
  std::filesystem::path output_dir;
};

/// Writes train/dev/test id manifests, split.json and stats.jsonl.
SplitStats cmd_prepare(const PrepareOptions& options);

/// Loads and validates a dataset and returns its counts.
SplitCounts cmd_validate_data(const std::filesystem::path& data, std::optional<DataFormat> format);

/// Runs the negation diagnostic with the generator of a finished approach2
/// run and writes negation.json into the run directory.
DivergenceReport cmd_diagnose_negation(const std::filesystem::path& config_path, const RunOptions& options,
                                       std::size_t sample_size, SplitName split);

/// Reads run_record.json files (or run directories holding one), writes the
/// comparison table to `output` when given, and returns the table text.
std::string cmd_report(std::span<const std::filesystem::path> runs, const std::optional<std::filesystem::path>& output);

}  // namespace kpa
