#include <gtest/gtest.h>

#include "json.hpp"
#include "kpa/csv.hpp"
#include "kpa/digest.hpp"
#include "kpa/error.hpp"
#include "kpa/matchers.hpp"
#include "kpa/stub_runtime.hpp"
#include "kpa/text.hpp"
#include "test_support.hpp"

using namespace kpa;
using kpa::testing::TempDir;

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

std::vector<ArgKPRecord> fixture_records() {
  return load_argkp(kpa::testing::fixture("fixture32.csv"), DataFormat::pair_csv);
}

MatcherSpec baseline_spec(const std::string& checkpoint = "bert-base") {
  MatcherSpec s;
  s.name = "baseline";
  s.kind = MatcherKind::baseline;
  s.checkpoint = checkpoint_by_id(checkpoint);
  s.train_config = default_train_config(s.checkpoint);
  return s;
}

MatcherSpec prompted_spec(const std::string& tmpl = "T1") {
  MatcherSpec s;
  s.name = "prompted-" + tmpl;
  s.kind = MatcherKind::prompted;
  s.checkpoint = checkpoint_by_id("t5-base");
  s.prompt_template = builtin_template(tmpl);
  s.verbalizer = verbalizer_for_template(tmpl);
  s.train_config = default_train_config(s.checkpoint, s.prompt_template->soft_token_count() > 0);
  return s;
}

// A fixed, label-independent function of the rendered text.
double text_score(const PromptInstance& inst, const std::string& word) {
  return static_cast<double>((fnv1a64(inst.rendered_text + "\x1f" + word) % 2001)) / 1000.0 - 1.0;
}

}  // namespace

TEST(Matchers, ValidateSpecs) {
  EXPECT_NO_THROW(validate(baseline_spec()));
  EXPECT_NO_THROW(validate(baseline_spec("t5-small")));
  EXPECT_NO_THROW(validate(prompted_spec("T5")));
  MatcherSpec s = prompted_spec();
  s.prompt_template.reset();
  EXPECT_EQ(code_of([&] { validate(s); }), ErrorCode::SpecInvalid);
  s = prompted_spec();
  s.prompt_template = parse_template("{X1} {X2}", "noanswer");
  EXPECT_EQ(code_of([&] { validate(s); }), ErrorCode::SpecInvalid);
  s = baseline_spec();
  s.verbalizer = matched_verbalizer();
  EXPECT_EQ(code_of([&] { validate(s); }), ErrorCode::SpecInvalid);
}

TEST(Matchers, BaselineTrainingContract) {
  TempDir dir;
  StubRuntime rt;
  const auto records = fixture_records();
  const std::vector<ArgKPRecord> train(records.begin(), records.begin() + 8);
  const std::vector<ArgKPRecord> dev(records.begin() + 8, records.begin() + 12);
  const auto art = train_matcher(rt, baseline_spec(), train, dev, dir.path() / "m");
  EXPECT_EQ(art.task, Task::pair_classification);
  EXPECT_EQ(art.metrics.size(), 3u);
  for (const auto& m : art.metrics) EXPECT_TRUE(m.dev_macro_f1.has_value());
  EXPECT_EQ(split(trim(read_text_file(art.dir / "metrics.jsonl")), '\n').size(), 3u);
  const auto trace = rt.recorder()->snapshot();
  ASSERT_EQ(trace.training_sources.size(), 8u);
  EXPECT_EQ(trace.training_sources[0], train[0].argument + " " + train[0].key_point);
  EXPECT_EQ(trace.training_targets[0], std::to_string(train[0].label));
}

TEST(Matchers, PromptedTrainingTargetsAreVerbalizerWords) {
  TempDir dir;
  StubRuntime rt;
  const auto records = fixture_records();
  const std::vector<ArgKPRecord> train(records.begin(), records.begin() + 8);
  const auto spec = prompted_spec("T3");
  train_matcher(rt, spec, train, train, dir.path() / "m");
  const auto trace = rt.recorder()->snapshot();
  ASSERT_EQ(trace.training_targets.size(), train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(trace.training_targets[i], train[i].label ? "Yes" : "No");
    EXPECT_EQ(count_occurrences(trace.training_sources[i], spec.checkpoint.mask_marker), 1u);
    EXPECT_NE(trace.training_sources[i].find(train[i].argument), std::string::npos);
  }
}

TEST(Matchers, EmptySplitRejected) {
  TempDir dir;
  StubRuntime rt;
  const auto records = fixture_records();
  EXPECT_EQ(code_of([&] { train_matcher(rt, baseline_spec(), {}, records, dir.path() / "m"); }), ErrorCode::EmptySplit);
  EXPECT_EQ(code_of([&] { train_matcher(rt, baseline_spec(), records, {}, dir.path() / "m"); }), ErrorCode::EmptySplit);
}

TEST(Matchers, EmptyRecordsGiveEmptyPredictions) {
  StubRuntime rt;
  const auto model = rt.open_checkpoint(checkpoint_by_id("bert-base"), Task::pair_classification, TrainConfig{});
  EXPECT_TRUE(predict_matcher(*model, baseline_spec(), {}).empty());
}

TEST(Matchers, BoundaryProbabilityIsNonMatch) {
  StubRuntime rt(uniform_stub_behavior());
  const auto records = fixture_records();
  const auto model = rt.open_checkpoint(checkpoint_by_id("bert-base"), Task::pair_classification, TrainConfig{});
  for (const auto& p : predict_matcher(*model, baseline_spec(), records)) {
    EXPECT_EQ(*p.match_probability, 0.5);
    EXPECT_EQ(p.label, 0);
  }
}

TEST(Matchers, PinnedMatchedScoreGivesAllOnes) {
  StubBehavior b = default_stub_behavior();
  b.answer_score = [](const PromptInstance&, const std::string& w) { return w == "matched" ? 10.0 : -10.0; };
  StubRuntime rt(b);
  const auto model = rt.open_checkpoint(checkpoint_by_id("t5-base"), Task::prompted_classification, TrainConfig{});
  const auto preds = predict_matcher(*model, prompted_spec("T1"), fixture_records());
  ASSERT_EQ(preds.size(), 32u);
  for (const auto& p : preds) EXPECT_EQ(p.label, 1);
}

TEST(Matchers, PromptedPathEqualsHandComposition) {
  StubBehavior b = default_stub_behavior();
  b.answer_score = text_score;
  StubRuntime rt(b);
  const auto records = fixture_records();
  for (const char* name : {"T1", "T2", "T3", "T4", "T5"}) {
    const auto spec = prompted_spec(name);
    const auto model = rt.open_checkpoint(spec.checkpoint, Task::prompted_classification, TrainConfig{});
    const auto preds = predict_matcher(*model, spec, records);
    ASSERT_EQ(preds.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto inst = render(*spec.prompt_template,
                               {{SlotId::X1, records[i].argument}, {SlotId::X2, records[i].key_point}},
                               spec.checkpoint.mask_marker);
      std::map<std::string, double> scores;
      for (const auto& w : spec.verbalizer->all_words()) scores[w] = text_score(inst, w);
      const auto v = verbalize(scores, *spec.verbalizer);
      EXPECT_EQ(preds[i].pair_id, records[i].pair_id);
      EXPECT_EQ(preds[i].label, v.label) << name << " " << i;
      EXPECT_DOUBLE_EQ(*preds[i].match_probability, v.match_probability);
    }
  }
}

TEST(Matchers, ThresholdMonotonicity) {
  StubRuntime rt;
  const auto records = fixture_records();
  const auto model = rt.open_checkpoint(checkpoint_by_id("bert-base"), Task::pair_classification, TrainConfig{});
  std::vector<Prediction> previous;
  for (int step = 0; step <= 20; ++step) {
    const auto preds = predict_matcher(*model, baseline_spec(), records, step / 20.0);
    if (!previous.empty()) {
      for (std::size_t i = 0; i < preds.size(); ++i) EXPECT_LE(preds[i].label, previous[i].label);
    }
    previous = preds;
  }
}

TEST(Matchers, KindMismatch) {
  StubRuntime rt;
  const auto pair_model = rt.open_checkpoint(checkpoint_by_id("t5-base"), Task::pair_classification, TrainConfig{});
  EXPECT_EQ(code_of([&] { predict_matcher(*pair_model, prompted_spec(), fixture_records()); }),
            ErrorCode::KindMismatch);
}

TEST(Matchers, PredictionsFileFields) {
  const std::vector<Prediction> preds{{"a", 1, 0.75}, {"b", 0, 0.25}};
  const std::string text = predictions_jsonl(preds, "spec", "dev");
  const auto first = nlohmann::json::parse(split(text, '\n').front());
  EXPECT_EQ(first.at("pair_id"), "a");
  EXPECT_EQ(first.at("label"), 1);
  EXPECT_EQ(first.at("match_probability"), 0.75);
  EXPECT_EQ(first.at("spec_name"), "spec");
  EXPECT_EQ(first.at("split_name"), "dev");
  EXPECT_EQ(parse_predictions_jsonl(text), preds);
}
