#include "kpa/commands.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <thread>

#include "fmt/format.h"
#include "kpa/csv.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/generation.hpp"
#include "kpa/matchers.hpp"
#include "kpa/report.hpp"
#include "kpa/triple_classifiers.hpp"

namespace kpa {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

ordered_json counts_json(const SplitCounts& c) {
  return {{"total", c.total}, {"matching", c.matching}, {"non_matching", c.non_matching}, {"topics", c.topics}};
}

ordered_json stats_json(const SplitStats& stats) {
  ordered_json j = ordered_json::object();
  for (const SplitName name : kSplitNames) j[std::string(to_string(name))] = counts_json(stats[name]);
  j["all"] = counts_json(stats.overall);
  return j;
}

std::string classifier_display(const TripleClassifierSpec& spec) {
  switch (spec.kind) {
    case TripleClassifierKind::naive_bayes: return "Naive Bayes";
    case TripleClassifierKind::svm: return "SVM";
    case TripleClassifierKind::decision_tree: return "Decision Tree";
    case TripleClassifierKind::plm: return display_name(*spec.checkpoint);
  }
  return "?";
}

ordered_json report_row(const ExperimentConfig& cfg) {
  ordered_json row{{"experiment", ""}, {"template", "-"}, {"generator", "-"}, {"model", ""},
                   {"domain", to_string(cfg.split.mode)}};
  switch (cfg.approach) {
    case Approach::baseline:
      row["experiment"] = "Baseline";
      row["model"] = display_name(cfg.matcher->checkpoint);
      break;
    case Approach::approach1:
      row["experiment"] = "Approach 1";
      row["template"] = cfg.matcher->prompt_template->name();
      row["model"] = display_name(cfg.matcher->checkpoint);
      break;
    case Approach::approach2:
      row["experiment"] = "Approach 2";
      row["template"] = cfg.generator->family;
      row["generator"] = display_name(cfg.generator->checkpoint);
      row["model"] = classifier_display(*cfg.classifier);
      break;
  }
  return row;
}

struct Evaluated {
  std::vector<Prediction> dev;
  std::vector<Prediction> test;
};

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path run_dir_of(const ExperimentConfig& cfg) { return cfg.output_dir / cfg.name; }

}  // namespace

ConfigOverrides RunOptions::all_overrides() const {
  ConfigOverrides out = overrides;
  if (seed) out.emplace_back("split.seed", std::to_string(*seed));
  if (output_dir) out.emplace_back("experiment.output_dir", output_dir->string());
  if (runtime) out.emplace_back("experiment.runtime", *runtime);
  if (threshold_learning) out.emplace_back("experiment.threshold_learning", *threshold_learning ? "on" : "off");
  if (data) out.emplace_back("data.path", data->string());
  if (split_dir) out.emplace_back("data.split_dir", split_dir->string());
  return out;
}

std::vector<ArgKPRecord> load_records(const ExperimentConfig& config) {
  if (!config.data_path) fail(ErrorCode::ConfigInvalid, config.name + ": no data path (set data.path or --data)");
  const DataFormat format = config.data_format.value_or(infer_data_format(*config.data_path));
  std::vector<ArgKPRecord> records = load_argkp(*config.data_path, format);
  if (config.full_stops) records = add_full_stops(records);
  return records;
}

SplitTriple make_split(const ExperimentConfig& config, std::span<const ArgKPRecord> records) {
  if (config.split_dir) {
    SplitTriple split = read_split_manifests(records, *config.split_dir);
    if (split.mode != config.split.mode) {
      fail(ErrorCode::MissingSplit, config.split_dir->string() + " holds a " + std::string(to_string(split.mode)) +
                                        " split, config asks for " + std::string(to_string(config.split.mode)));
    }
    return split;
  }
  if (config.split.mode == SplitMode::in_domain) return split_in_domain(records, config.split.ratios, config.split.seed);
  std::optional<TopicAssignment> assignment;
  if (config.topic_assignment) assignment = read_topic_assignment(*config.topic_assignment);
  return split_cross_domain(records, config.split.topics, config.split.seed, assignment);
}

std::string data_fingerprint(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string combined;
  for (const auto& f : files) combined += f.filename().string() + "\n" + sha256_file(f) + "\n";
  return sha256_hex(combined);
}

RunResult run_experiment(const ExperimentConfig& cfg, const RuntimeResolver& resolver) {
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<ArgKPRecord> records = load_records(cfg);
  const SplitTriple split = make_split(cfg, records);
  for (const SplitName name : kSplitNames) {
    if (split.part(name).empty()) fail(ErrorCode::EmptySplit, cfg.name + ": " + std::string(to_string(name)) + " split is empty");
  }
  const fs::path dir = run_dir_of(cfg);
  fs::create_directories(dir);
  write_text_file(dir / "config.ini", cfg.canonical_text);
  write_split_manifests(split, cfg.split, dir / "split");

  const std::unique_ptr<Runtime> runtime = resolver(cfg.runtime);
  ordered_json artifacts = ordered_json::object();
  Evaluated evaluated;

  if (cfg.approach != Approach::approach2) {
    const MatcherSpec& spec = *cfg.matcher;
    const ModelArtifact artifact = train_matcher(*runtime, spec, split.train, split.dev, dir / "matcher");
    artifacts["matcher"] = artifact.fingerprint;
    const auto model = runtime->load(artifact);
    evaluated.dev = predict_matcher(*model, spec, split.dev);
    evaluated.test = predict_matcher(*model, spec, split.test);
  } else {
    const GeneratorSpec& g = *cfg.generator;
    const GenerationTemplateFamily& family = builtin_family(g.family);
    const ModelArtifact gen_artifact =
        train_generator(*runtime, g.checkpoint, family, split.train, split.dev, g.train_config, dir / "generator");
    artifacts["generator"] = gen_artifact.fingerprint;
    const auto generator = runtime->load(gen_artifact);
    const auto train_triples = generate_intermediaries(*generator, family, split.train, g.decode, Phase::train);
    const auto dev_triples = generate_intermediaries(*generator, family, split.dev, g.decode, Phase::inference);
    const auto test_triples = generate_intermediaries(*generator, family, split.test, g.decode, Phase::inference);
    write_text_file(dir / "triples_train.jsonl", triples_jsonl(train_triples, family.name(), gen_artifact.fingerprint));
    write_text_file(dir / "triples_dev.jsonl", triples_jsonl(dev_triples, family.name(), gen_artifact.fingerprint));
    write_text_file(dir / "triples_test.jsonl", triples_jsonl(test_triples, family.name(), gen_artifact.fingerprint));

    const FittedTripleClassifier classifier =
        train_triple_classifier(*runtime, *cfg.classifier, train_triples, dev_triples, dir / "classifier");
    artifacts["classifier"] = classifier.fingerprint();
    evaluated.dev = predict_triples(classifier, dev_triples);
    evaluated.test = predict_triples(classifier, test_triples);
  }

  const GoldLabels gold = gold_labels(records);
  double threshold = 0.5;
  ordered_json threshold_json{{"learning", cfg.threshold_learning}, {"default", 0.5}};
  if (cfg.threshold_learning) {
    const ThresholdChoice learned = learn_threshold(evaluated.dev, gold);
    threshold = learned.threshold;
    threshold_json["learned"] = learned.threshold;
    threshold_json["dev_macro_f1_at_learned"] = learned.dev_macro_f1;
    threshold_json["dev_macro_f1_at_default"] = macro_f1(evaluated.dev, gold).macro_f1;
    fmt::print(stderr, "{}: learned threshold {:.2f} (default 0.50)\n", cfg.name, learned.threshold);
    evaluated.dev = apply_threshold(evaluated.dev, threshold);
    evaluated.test = apply_threshold(evaluated.test, threshold);
  }
  threshold_json["used"] = threshold;

  ordered_json evaluation = ordered_json::object();
  for (const auto& [name, preds] : {std::pair{"dev", &evaluated.dev}, std::pair{"test", &evaluated.test}}) {
    write_text_file(dir / fmt::format("predictions_{}.jsonl", name), predictions_jsonl(*preds, cfg.name, name));
    const EvalReport report = macro_f1(*preds, gold, threshold);
    write_text_file(dir / fmt::format("report_{}.json", name), to_json(report).dump(2) + "\n");
    evaluation[name] = to_json(report);
  }

  ordered_json record{{"name", cfg.name},
                      {"approach", to_string(cfg.approach)},
                      {"runtime", runtime->name()},
                      {"config_fingerprint", cfg.fingerprint()},
                      {"config", cfg.canonical_text},
                      {"data_fingerprint", data_fingerprint(*cfg.data_path)},
                      {"split", {{"mode", to_string(split.mode)}, {"seed", split.seed}, {"stats", stats_json(split_stats(split))}}},
                      {"artifacts", artifacts},
                      {"threshold", threshold_json},
                      {"row", report_row(cfg)},
                      {"evaluation", evaluation},
                      {"timing_file", "timing.json"}};
  write_text_file(dir / "run_record.json", record.dump(2) + "\n");

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(dir / "timing.json",
                  ordered_json{{"started_at", utc_timestamp(started)}, {"wall_clock_seconds", seconds}}.dump(2) + "\n");
  return {dir, record};
}

RunResult cmd_run(const fs::path& config_path, const RunOptions& options) {
  return run_experiment(load_experiment_config(config_path, options.all_overrides()), options.resolver);
}

std::vector<RunResult> cmd_batch(std::span<const fs::path> config_paths, const RunOptions& options, int jobs) {
  // Parse everything first so a bad config fails before any training starts.
  std::vector<ExperimentConfig> configs;
  for (const auto& p : config_paths) configs.push_back(load_experiment_config(p, options.all_overrides()));
  std::set<fs::path> dirs;
  for (const auto& c : configs) {
    if (!dirs.insert(run_dir_of(c)).second) {
      fail(ErrorCode::ConfigInvalid, "two configs write to " + run_dir_of(c).string());
    }
  }

  std::vector<std::optional<RunResult>> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = run_experiment(configs[i], options.resolver);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(configs.size(), 1))));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<RunResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

SplitStats cmd_prepare(const PrepareOptions& options) {
  const std::vector<ArgKPRecord> records =
      load_argkp(options.data, options.format.value_or(infer_data_format(options.data)));
  SplitTriple split;
  if (options.params.mode == SplitMode::in_domain) {
    split = split_in_domain(records, options.params.ratios, options.params.seed);
  } else {
    std::optional<TopicAssignment> assignment;
    if (options.assignment) assignment = read_topic_assignment(*options.assignment);
    split = split_cross_domain(records, options.params.topics, options.params.seed, assignment);
  }
  write_split_manifests(split, options.params, options.output_dir);
  return split_stats(split);
}

SplitCounts cmd_validate_data(const fs::path& data, std::optional<DataFormat> format) {
  return count_records(load_argkp(data, format.value_or(infer_data_format(data))));
}

DivergenceReport cmd_diagnose_negation(const fs::path& config_path, const RunOptions& options,
                                       std::size_t sample_size, SplitName split_name) {
  const ExperimentConfig cfg = load_experiment_config(config_path, options.all_overrides());
  if (cfg.approach != Approach::approach2) {
    fail(ErrorCode::ConfigInvalid, cfg.name + ": the negation diagnostic needs an approach2 config");
  }
  const fs::path dir = run_dir_of(cfg);
  if (!fs::exists(dir / "generator" / "artifact.json")) {
    fail(ErrorCode::MissingSplit, dir.string() + " has no trained generator; run the experiment first");
  }
  const std::vector<ArgKPRecord> records = load_records(cfg);
  const SplitTriple split = read_split_manifests(records, dir / "split");
  const auto runtime = options.resolver(cfg.runtime);
  const auto generator = runtime->load(read_artifact(dir / "generator"));
  const DivergenceReport report = negation_divergence(*generator, builtin_family(cfg.generator->family),
                                                      split.part(split_name), sample_size, cfg.split.seed,
                                                      cfg.generator->decode);
  ordered_json j = to_json(report);
  j["split"] = to_string(split_name);
  j["family"] = cfg.generator->family;
  write_text_file(dir / "negation.json", j.dump(2) + "\n");
  return report;
}

std::string cmd_report(std::span<const fs::path> runs, const std::optional<fs::path>& output) {
  std::vector<nlohmann::json> records;
  for (const auto& p : runs) {
    const fs::path file = fs::is_directory(p) ? p / "run_record.json" : p;
    try {
      records.push_back(nlohmann::json::parse(read_text_file(file)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ArtifactCorrupt, file.string() + ": " + e.what());
    }
  }
  const auto rows = collect_report_rows(records);
  const std::string table = render_report_table(rows);
  if (output) {
    write_text_file(*output, table);
    fs::path json_path = *output;
    json_path.replace_extension(".json");
    if (json_path != *output) write_text_file(json_path, report_json(rows).dump(2) + "\n");
  }
  return table;
}

}  // namespace kpa
