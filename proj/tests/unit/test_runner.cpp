#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "kpa/commands.hpp"
#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/experiment_config.hpp"
#include "kpa/report.hpp"
#include "kpa/text.hpp"
#include "test_support.hpp"

using namespace kpa;
using kpa::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no kpa::Error thrown";
  return ErrorCode::Io;
}

const char* kMinimal = R"(
[experiment]
name = tiny
approach = baseline
runtime = stub
[split]
mode = in_domain
seed = 7
[matcher]
checkpoint = bert-base
)";

RunOptions stub_options(const fs::path& out) {
  RunOptions o;
  o.data = kpa::testing::fixture("fixture32.csv");
  o.runtime = "stub";
  o.output_dir = out;
  return o;
}

// The fixture has four topics, so cross-domain presets need a smaller split.
RunOptions options_for(const std::string& preset, const fs::path& out) {
  RunOptions o = stub_options(out);
  if (preset.ends_with("crossdomain")) o.overrides.emplace_back("split.topics", "2,1,1");
  return o;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(kpa::testing::source_dir() / "configs" / "presets")) {
    if (e.path().extension() == ".ini") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KPA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalParsesWithDefaults) {
  const auto cfg = parse_experiment_config(kMinimal);
  EXPECT_EQ(cfg.name, "tiny");
  EXPECT_EQ(cfg.approach, Approach::baseline);
  EXPECT_FALSE(cfg.threshold_learning);
  EXPECT_TRUE(cfg.full_stops);
  ASSERT_TRUE(cfg.matcher);
  EXPECT_EQ(cfg.matcher->kind, MatcherKind::baseline);
  EXPECT_EQ(cfg.split.seed, 7u);
}

TEST(Config, OverridesChangeFingerprint) {
  const auto a = parse_experiment_config(kMinimal);
  const auto b = parse_experiment_config(kMinimal, {{"split.seed", "8"}});
  const auto c = parse_experiment_config(kMinimal, {{"split.seed", "7"}});
  EXPECT_EQ(b.split.seed, 8u);
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint(), c.fingerprint());
  EXPECT_EQ(parse_override("matcher.epochs=2"), (std::pair<std::string, std::string>{"matcher.epochs", "2"}));
  EXPECT_EQ(code_of([] { parse_override("epochs"); }), ErrorCode::ConfigInvalid);
}

TEST(Config, Errors) {
  const std::string base = kMinimal;
  EXPECT_EQ(code_of([&] { parse_experiment_config(base + "[bogus]\nx = 1\n"); }), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code_of([&] { parse_experiment_config(base, {{"matcher.colour", "red"}}); }), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code_of([&] { parse_experiment_config(base, {{"experiment.approach", "approach3"}}); }),
            ErrorCode::ConfigInvalid);
  EXPECT_THROW(parse_experiment_config(base, {{"matcher.checkpoint", "gpt-9"}}), Error);
  EXPECT_THROW(parse_experiment_config(base, {{"experiment.approach", "approach2"}}), Error);
  EXPECT_EQ(code_of([] { load_experiment_config("/nonexistent/x.ini"); }), ErrorCode::ConfigInvalid);
}

TEST(Config, AllPresetsParse) {
  const auto names = preset_names();
  EXPECT_EQ(names.size(), 58u);
  std::size_t a1 = 0, a2 = 0, base = 0;
  for (const auto& n : names) {
    const auto cfg = load_experiment_config(kpa::testing::preset(n));
    EXPECT_EQ(cfg.name, n);
    EXPECT_FALSE(cfg.threshold_learning) << n;
    EXPECT_EQ(cfg.split.seed, 42u);
    EXPECT_EQ(cfg.split.mode, n.ends_with("crossdomain") ? SplitMode::cross_domain : SplitMode::in_domain);
    switch (cfg.approach) {
      case Approach::baseline: ++base; break;
      case Approach::approach1: ++a1; break;
      case Approach::approach2:
        ++a2;
        EXPECT_TRUE(cfg.generator && cfg.classifier) << n;
        break;
    }
  }
  EXPECT_EQ(base, 8u);
  EXPECT_EQ(a1, 10u);
  EXPECT_EQ(a2, 40u);
}

TEST(Runner, RunWritesEveryFile) {
  TempDir dir;
  const auto res = cmd_run(kpa::testing::preset("approach2-t6-t5-small-svm-indomain"), stub_options(dir.path()));
  for (const char* f : {"config.ini", "run_record.json", "timing.json", "predictions_dev.jsonl", "predictions_test.jsonl",
                        "report_dev.json", "report_test.json", "triples_train.jsonl", "triples_test.jsonl"}) {
    EXPECT_TRUE(fs::exists(res.run_dir / f)) << f;
  }
  const auto& rec = res.run_record;
  for (const char* k : {"config_fingerprint", "data_fingerprint", "split", "artifacts", "evaluation", "row"}) {
    EXPECT_TRUE(rec.contains(k)) << k;
  }
  EXPECT_EQ(rec.at("runtime"), "stub");
  const auto test_report = eval_report_from_json(nlohmann::json::parse(read_text_file(res.run_dir / "report_test.json")));
  EXPECT_GE(test_report.macro_f1, 0.0);
  EXPECT_LE(test_report.macro_f1, 1.0);
  for (const auto& line : split(trim(read_text_file(res.run_dir / "predictions_test.jsonl")), '\n')) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("pair_id"));
  }
}

TEST(Runner, RepeatRunsAreByteIdentical) {
  TempDir dir;
  const std::vector<std::string> files{"report_dev.json", "report_test.json", "predictions_test.jsonl", "run_record.json"};
  for (const char* preset : {"baseline-bert-base-indomain", "approach1-t2-t5-base-crossdomain",
                             "approach2-t7-bart-large-decision-tree-indomain"}) {
    const auto first = cmd_run(kpa::testing::preset(preset), options_for(preset, dir.path()));
    std::vector<std::string> before;
    for (const auto& f : files) before.push_back(read_text_file(first.run_dir / f));
    const auto second = cmd_run(kpa::testing::preset(preset), options_for(preset, dir.path()));
    for (std::size_t i = 0; i < files.size(); ++i) {
      EXPECT_EQ(before[i], read_text_file(second.run_dir / files[i])) << preset << " " << files[i];
    }
  }
}

TEST(Runner, PrepareIsIdempotentAndPartitions) {
  TempDir dir;
  PrepareOptions p;
  p.data = kpa::testing::fixture("fixture32.csv");
  p.params.mode = SplitMode::in_domain;
  p.params.seed = 42;
  p.params.ratios = {71, 12, 17};
  p.output_dir = dir.path() / "one";
  cmd_prepare(p);
  p.output_dir = dir.path() / "two";
  cmd_prepare(p);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const char* f : {"train.ids", "dev.ids", "test.ids"}) {
    const auto one = read_text_file(dir.path() / "one" / f);
    EXPECT_EQ(one, read_text_file(dir.path() / "two" / f)) << f;
    for (const auto& id : split(trim(one), '\n')) {
      ids.insert(id);
      ++total;
    }
  }
  EXPECT_EQ(total, 32u);
  EXPECT_EQ(ids.size(), 32u);
  EXPECT_EQ(read_text_file(dir.path() / "one" / "split.json"), read_text_file(dir.path() / "two" / "split.json"));
}

TEST(Runner, PreparedSplitIsReused) {
  TempDir dir;
  PrepareOptions p;
  p.data = kpa::testing::fixture("fixture32.csv");
  p.params.mode = SplitMode::in_domain;
  p.params.seed = 42;
  p.params.ratios = {71, 12, 17};
  p.output_dir = dir.path() / "split";
  cmd_prepare(p);
  auto o = stub_options(dir.path() / "runs");
  o.split_dir = p.output_dir;
  const auto reused = cmd_run(kpa::testing::preset("baseline-t5-small-indomain"), o);
  const auto fresh = cmd_run(kpa::testing::preset("baseline-t5-small-indomain"), stub_options(dir.path() / "fresh"));
  EXPECT_EQ(reused.run_record.at("split").at("stats"), fresh.run_record.at("split").at("stats"));
  o.overrides.emplace_back("split.mode", "cross_domain");
  o.overrides.emplace_back("split.topics", "2,1,1");
  EXPECT_THROW(cmd_run(kpa::testing::preset("baseline-t5-small-indomain"), o), Error);
}

TEST(Runner, BatchKeepsOrderAndRejectsDuplicates) {
  TempDir dir;
  const std::vector<fs::path> configs{kpa::testing::preset("baseline-bert-base-indomain"),
                                      kpa::testing::preset("approach1-t1-t5-base-indomain"),
                                      kpa::testing::preset("approach2-t6-t5-small-naive-bayes-indomain")};
  const auto results = cmd_batch(configs, stub_options(dir.path()), 3);
  ASSERT_EQ(results.size(), 3u);
  for (std::size_t i = 0; i < configs.size(); ++i) EXPECT_EQ(results[i].run_dir.filename(), configs[i].stem());
  const std::vector<fs::path> dup{configs[0], configs[0]};
  EXPECT_EQ(code_of([&] { cmd_batch(dup, stub_options(dir.path()), 2); }), ErrorCode::ConfigInvalid);
}

TEST(Report, SingleAndMixedRows) {
  TempDir dir;
  const auto base = cmd_run(kpa::testing::preset("baseline-bert-base-indomain"), stub_options(dir.path()));
  const auto a2 = cmd_run(kpa::testing::preset("approach2-t7-bart-large-svm-indomain"), stub_options(dir.path()));
  const std::vector<nlohmann::json> one{nlohmann::json::parse(base.run_record.dump())};
  const auto single = collect_report_rows(one);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].generator, "-");
  EXPECT_FALSE(single[0].cross_domain);
  const auto table = render_report_table(single);
  EXPECT_EQ(split(trim(table), '\n').size(), 3u);
  EXPECT_NE(table.find("| Baseline "), std::string::npos);

  const std::vector<fs::path> runs{base.run_dir, a2.run_dir};
  const auto mixed = cmd_report(runs, dir.path() / "table.md");
  EXPECT_TRUE(fs::exists(dir.path() / "table.md"));
  const auto lines = split(trim(mixed), '\n');
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_NE(lines[2].find("Baseline"), std::string::npos);
  EXPECT_NE(lines[3].find("BART-large"), std::string::npos);
  EXPECT_NE(lines[3].find("SVM"), std::string::npos);
}

TEST(Report, EveryPresetFillsATableRow) {
  TempDir dir;
  std::vector<nlohmann::json> records;
  for (const auto& name : preset_names()) {
    records.push_back(nlohmann::json::parse(
        cmd_run(kpa::testing::preset(name), options_for(name, dir.path())).run_record.dump()));
  }
  const auto rows = collect_report_rows(records);
  EXPECT_EQ(rows.size(), 29u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.in_domain && r.cross_domain) << r.experiment << " " << r.template_name << " " << r.model;
    EXPECT_EQ(r.generator != "-", r.experiment == "Approach 2");
  }
  EXPECT_EQ(rows.front().experiment, "Baseline");
  EXPECT_EQ(rows.back().experiment, "Approach 2");
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const std::string fixture = kpa::testing::fixture("fixture32.csv").string();
  EXPECT_EQ(run_cli("validate-data --data " + fixture), 0);
  EXPECT_EQ(run_cli("validate-data --data /nonexistent.csv"), 3);
  EXPECT_EQ(run_cli("run --config /nonexistent.ini"), 2);
  EXPECT_EQ(run_cli("run --bogus-flag"), 2);
  EXPECT_EQ(run_cli("run --config " + kpa::testing::preset("baseline-bert-base-indomain").string() +
                    " --runtime stub --data " + fixture + " --output-dir " + dir.path().string()),
            0);
  EXPECT_TRUE(fs::exists(dir.path() / "baseline-bert-base-indomain" / "run_record.json"));
  EXPECT_EQ(run_cli("diagnose-negation --config " + kpa::testing::preset("baseline-bert-base-indomain").string() +
                    " --runtime stub --data " + fixture + " --output-dir " + dir.path().string()),
            2);
}
