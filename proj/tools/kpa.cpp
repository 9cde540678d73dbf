// kpa: command-line front end for key point matching experiments.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fmt/format.h"
#include "kpa/commands.hpp"
#include "kpa/error.hpp"

namespace {

namespace fs = std::filesystem;

int exit_code_for(kpa::ErrorCategory category) {
  switch (category) {
    case kpa::ErrorCategory::config: return 2;
    case kpa::ErrorCategory::data: return 3;
    case kpa::ErrorCategory::training: return 4;
    case kpa::ErrorCategory::other: return 1;
  }
  return 1;
}

struct RunFlags {
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> runtime;
  std::optional<std::string> threshold_learning;
  std::optional<std::string> data;
  std::optional<std::string> split_dir;

  void attach(CLI::App& app) {
    app.add_option("--seed", seed, "Split seed (overrides split.seed)");
    app.add_option("--output-dir", output_dir, "Root directory for run outputs");
    app.add_option("--runtime", runtime, "Model backend")->check(CLI::IsMember({"real", "stub"}));
    app.add_option("--threshold-learning", threshold_learning, "Learn the decision threshold on dev")
        ->check(CLI::IsMember({"on", "off"}));
    app.add_option("--data", data, "Dataset file or three-file directory");
    app.add_option("--split-dir", split_dir, "Reuse prepared split manifests");
    app.add_option("--set", sets, "Config override section.key=value (repeatable)");
  }

  kpa::RunOptions options() const {
    kpa::RunOptions o;
    for (const auto& s : sets) o.overrides.push_back(kpa::parse_override(s));
    o.seed = seed;
    if (output_dir) o.output_dir = *output_dir;
    o.runtime = runtime;
    if (threshold_learning) o.threshold_learning = *threshold_learning == "on";
    if (data) o.data = *data;
    if (split_dir) o.split_dir = *split_dir;
    return o;
  }
};

std::vector<double> parse_triplet(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find_first_of(",:", start);
    const std::string part = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      kpa::fail(kpa::ErrorCode::ConfigInvalid, fmt::format("{}: expected three numbers, got '{}'", flag, text));
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (out.size() != 3) kpa::fail(kpa::ErrorCode::ConfigInvalid, fmt::format("{}: expected three numbers", flag));
  return out;
}

void print_counts(const std::string& label, const kpa::SplitCounts& c) {
  const double pct = c.total ? 100.0 * static_cast<double>(c.matching) / static_cast<double>(c.total) : 0.0;
  fmt::print("{:<6} pairs={} matching={} ({:.1f}%) non_matching={} topics={}\n", label, c.total, c.matching, pct,
             c.non_matching, c.topics);
}

void print_run(const kpa::RunResult& r) {
  const auto& ev = r.run_record.at("evaluation");
  fmt::print("{}: dev macro-F1 {:.4f}, test macro-F1 {:.4f} ({})\n", r.run_record.at("name").get<std::string>(),
             ev.at("dev").at("macro_f1").get<double>(), ev.at("test").at("macro_f1").get<double>(),
             r.run_dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Key point matching experiments"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Split a dataset and write manifests");
  std::string prep_data, prep_out, prep_mode = "in_domain", prep_ratios = "71,12,17", prep_topics = "19,4,5";
  std::optional<std::string> prep_format, prep_assignment;
  std::uint64_t prep_seed = 42;
  prepare->add_option("--data", prep_data, "Dataset file or three-file directory")->required();
  prepare->add_option("--format", prep_format, "pair_csv or three_file");
  prepare->add_option("--mode", prep_mode, "in_domain or cross_domain")
      ->check(CLI::IsMember({"in_domain", "cross_domain"}));
  prepare->add_option("--ratios", prep_ratios, "Train,dev,test percentages");
  prepare->add_option("--topics", prep_topics, "Train,dev,test topic counts");
  prepare->add_option("--assignment", prep_assignment, "CSV fixing topic,split");
  prepare->add_option("--seed", prep_seed, "Split seed");
  prepare->add_option("--output-dir", prep_out, "Manifest directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Run one experiment");
  std::string run_config;
  RunFlags run_flags;
  run->add_option("--config", run_config, "Experiment config")->required();
  run_flags.attach(*run);

  // batch
  auto* batch = app.add_subcommand("batch", "Run several experiments");
  std::vector<std::string> batch_configs;
  int batch_jobs = 1;
  RunFlags batch_flags;
  batch->add_option("--config,configs", batch_configs, "Experiment configs")->required();
  batch->add_option("--jobs", batch_jobs, "Parallel workers")->check(CLI::PositiveNumber);
  batch_flags.attach(*batch);

  // report
  auto* report = app.add_subcommand("report", "Tabulate finished runs");
  std::vector<std::string> report_runs;
  std::optional<std::string> report_output;
  report->add_option("runs", report_runs, "Run directories or run_record.json files")->required();
  report->add_option("--output", report_output, "Write the table here (and a .json next to it)");

  // diagnose-negation
  auto* negation = app.add_subcommand("diagnose-negation", "Compare generations under both template polarities");
  std::string neg_config, neg_split = "test";
  std::size_t neg_sample = 0;
  RunFlags neg_flags;
  negation->add_option("--config", neg_config, "Config of a finished approach2 run")->required();
  negation->add_option("--sample-size", neg_sample, "Records to sample (0 = all)");
  negation->add_option("--split", neg_split, "Split to probe")->check(CLI::IsMember({"train", "dev", "test"}));
  neg_flags.attach(*negation);

  // validate-data
  auto* validate = app.add_subcommand("validate-data", "Load a dataset and print its counts");
  std::string val_data;
  std::optional<std::string> val_format;
  validate->add_option("--data", val_data, "Dataset file or three-file directory")->required();
  validate->add_option("--format", val_format, "pair_csv or three_file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (prepare->parsed()) {
      kpa::PrepareOptions o;
      o.data = prep_data;
      if (prep_format) o.format = kpa::parse_data_format(*prep_format);
      o.params.mode = kpa::parse_split_mode(prep_mode);
      o.params.seed = prep_seed;
      const auto r = parse_triplet(prep_ratios, "--ratios");
      o.params.ratios = {r[0], r[1], r[2]};
      const auto t = parse_triplet(prep_topics, "--topics");
      o.params.topics = {static_cast<std::size_t>(t[0]), static_cast<std::size_t>(t[1]),
                         static_cast<std::size_t>(t[2])};
      if (prep_assignment) o.assignment = *prep_assignment;
      o.output_dir = prep_out;
      const kpa::SplitStats stats = kpa::cmd_prepare(o);
      for (const auto name : kpa::kSplitNames) print_counts(std::string(kpa::to_string(name)), stats[name]);
      print_counts("all", stats.overall);
    } else if (run->parsed()) {
      print_run(kpa::cmd_run(run_config, run_flags.options()));
    } else if (batch->parsed()) {
      const std::vector<fs::path> paths(batch_configs.begin(), batch_configs.end());
      for (const auto& r : kpa::cmd_batch(paths, batch_flags.options(), batch_jobs)) print_run(r);
    } else if (report->parsed()) {
      const std::vector<fs::path> paths(report_runs.begin(), report_runs.end());
      std::optional<fs::path> out;
      if (report_output) out = *report_output;
      std::cout << kpa::cmd_report(paths, out);
    } else if (negation->parsed()) {
      const auto r = kpa::cmd_diagnose_negation(neg_config, neg_flags.options(), neg_sample,
                                                kpa::parse_split_name(neg_split));
      fmt::print("pairs={} exact_match_fraction={:.4f} similarity_mean={:.4f}\n", r.n_pairs, r.exact_match_fraction,
                 r.normalized_similarity_mean);
    } else if (validate->parsed()) {
      std::optional<kpa::DataFormat> format;
      if (val_format) format = kpa::parse_data_format(*val_format);
      print_counts("all", kpa::cmd_validate_data(val_data, format));
    }
  } catch (const kpa::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
