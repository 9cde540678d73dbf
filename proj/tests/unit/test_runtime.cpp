#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/native_runtime.hpp"
#include "kpa/prompt.hpp"
#include "kpa/runtime.hpp"
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

PromptInstance t1_instance(const CheckpointRef& ref, const std::string& a, const std::string& b) {
  return render(builtin_template("T1"), {{SlotId::X1, a}, {SlotId::X2, b}}, ref.mask_marker);
}

std::vector<PairExample> memorize_pairs() {
  return {{"cheap buses cut congestion", "Transport reduces congestion", 1},
          {"subsidies waste taxes", "Transport reduces congestion", 0},
          {"fossil fuels heat the planet", "Fuels cause warming", 1},
          {"mining jobs would vanish", "Fuels cause warming", 0}};
}

std::vector<PairExample> toy_pairs(std::size_t n) {
  std::vector<PairExample> out;
  const std::vector<std::string> topics{"transport", "fuels", "cannabis", "week"};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = topics[i % topics.size()];
    const int label = static_cast<int>((i / 4) % 2);
    out.push_back({label ? t + " helps people a lot " + std::to_string(i) : "unrelated words " + std::to_string(i),
                   t + " helps people", label});
  }
  return out;
}

TrainConfig quick_config(int epochs = 5) {
  TrainConfig c;
  c.learning_rate = 0.05;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 3;
  return c;
}

FinetuneRequest pair_request(const std::filesystem::path& dir, std::vector<PairExample> train, TrainConfig config) {
  FinetuneRequest r;
  r.checkpoint = checkpoint_by_id("bert-base-uncased");
  r.task = Task::pair_classification;
  r.train = train;
  r.dev = std::move(train);
  r.config = config;
  r.output_dir = dir;
  return r;
}

}  // namespace

TEST(Catalog, KnownCheckpoints) {
  EXPECT_EQ(checkpoint_catalog().size(), 5u);
  EXPECT_EQ(checkpoint_by_id("bert-base").model_id, "bert-base-uncased");
  EXPECT_EQ(checkpoint_by_id("t5-small").family, ModelFamily::encoder_decoder);
  EXPECT_EQ(checkpoint_by_id("bart-large").mask_marker, "<mask>");
  EXPECT_EQ(checkpoint_by_id("bert-large").mask_marker, "[MASK]");
  EXPECT_EQ(display_name(checkpoint_by_id("facebook/bart-large")), "BART-large");
  EXPECT_EQ(code_of([] { checkpoint_by_id("gpt-9"); }), ErrorCode::UnknownCheckpoint);
}

TEST(TrainConfigDefaults, FollowHyperparameterTable) {
  const auto bert = default_train_config(checkpoint_by_id("bert-base"));
  EXPECT_DOUBLE_EQ(bert.learning_rate, 2e-5);
  EXPECT_EQ(bert.epochs, 3);
  EXPECT_EQ(bert.optimizer_name, "adam");
  EXPECT_DOUBLE_EQ(default_train_config(checkpoint_by_id("bert-large")).learning_rate, 2e-5);

  const auto t5base = default_train_config(checkpoint_by_id("t5-base"));
  EXPECT_DOUBLE_EQ(t5base.learning_rate, 1e-4);
  EXPECT_FALSE(t5base.soft_prompt_learning_rate);
  const auto t5soft = default_train_config(checkpoint_by_id("t5-base"), true);
  EXPECT_DOUBLE_EQ(t5soft.learning_rate, 1e-4);
  EXPECT_DOUBLE_EQ(*t5soft.soft_prompt_learning_rate, 1e-3);

  const auto t5small = default_train_config(checkpoint_by_id("t5-small"));
  EXPECT_DOUBLE_EQ(t5small.learning_rate, 3e-4);
  EXPECT_EQ(t5small.epochs, 4);
  const auto bart = default_train_config(checkpoint_by_id("bart-large"));
  EXPECT_DOUBLE_EQ(bart.learning_rate, 2e-5);
  EXPECT_EQ(bart.epochs, 5);
  EXPECT_EQ(bart.batch_size, 16);
  EXPECT_EQ(bart.max_input_length, 256);
}

TEST(TrainConfigDefaults, ValidateAndRoundTrip) {
  TrainConfig c = default_train_config(checkpoint_by_id("t5-base"), true);
  c.max_steps = 7;
  EXPECT_EQ(train_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
  TrainConfig bad = c;
  bad.learning_rate = 0;
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::SpecInvalid);
  bad = c;
  bad.epochs = 0;
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::SpecInvalid);
  bad = c;
  bad.optimizer_name = "sgd";
  EXPECT_EQ(code_of([&] { validate(bad); }), ErrorCode::SpecInvalid);
}

TEST(SpecialTokens, Classification) {
  const auto& t5 = checkpoint_by_id("t5-small");
  EXPECT_TRUE(is_special_token("<extra_id_0>", t5));
  EXPECT_TRUE(is_special_token("<extra_id_17>", t5));
  EXPECT_TRUE(is_special_token("</s>", t5));
  EXPECT_TRUE(is_special_token("<pad>", t5));
  EXPECT_FALSE(is_special_token("cloning", t5));
}

class StubModels : public ::testing::Test {
 protected:
  StubRuntime runtime;
  const CheckpointRef& t5 = checkpoint_by_id("t5-base");
  const CheckpointRef& bart = checkpoint_by_id("bart-large");
};

TEST_F(StubModels, ScoreAnswersShapeAndDedup) {
  const auto model = runtime.open_checkpoint(t5, Task::prompted_classification, TrainConfig{});
  const auto inst = t1_instance(t5, "buses reduce traffic", "transport reduces traffic");
  const std::vector<std::string> two{"matched", "not matched"};
  const auto scores = model->score_answers(inst, two);
  EXPECT_EQ(scores.size(), 2u);
  for (const auto& [w, s] : scores) EXPECT_TRUE(std::isfinite(s)) << w;
  const std::vector<std::string> dup{"Yes", "Yes", "No"};
  EXPECT_EQ(model->score_answers(inst, dup).size(), 2u);
}

TEST_F(StubModels, ScoreAnswersErrors) {
  const auto model = runtime.open_checkpoint(t5, Task::prompted_classification, TrainConfig{});
  const std::vector<std::string> words{"Yes", "No"};
  PromptInstance no_mask = render(parse_template("{X1}"), {{SlotId::X1, "plain"}}, t5.mask_marker);
  EXPECT_EQ(code_of([&] { model->score_answers(no_mask, words); }), ErrorCode::NoMaskFound);
  const auto pair_model = runtime.open_checkpoint(t5, Task::pair_classification, TrainConfig{});
  EXPECT_EQ(code_of([&] { pair_model->score_answers(t1_instance(t5, "a", "b"), words); }), ErrorCode::UnknownTask);
  EXPECT_EQ(code_of([&] { pair_model->generate("x", DecodeOptions{}); }), ErrorCode::UnknownTask);
}

TEST_F(StubModels, UniformScoresVerbalizeToHalf) {
  StubRuntime uniform(uniform_stub_behavior());
  const auto model = uniform.open_checkpoint(t5, Task::prompted_classification, TrainConfig{});
  const auto scores = model->score_answers(t1_instance(t5, "a b", "c d"), matched_verbalizer().all_words());
  const auto v = verbalize(scores, matched_verbalizer());
  EXPECT_DOUBLE_EQ(v.match_probability, 0.5);
  EXPECT_EQ(v.label, 0);
}

TEST_F(StubModels, GenerateDeterministicAndCapped) {
  const auto model = runtime.open_checkpoint(bart, Task::conditional_generation, TrainConfig{});
  DecodeOptions greedy{DecodeOptions::Strategy::greedy, 1, 64};
  const std::string src = "cloning is wrong This means <mask>.";
  EXPECT_EQ(model->generate(src, greedy), model->generate(src, greedy));
  greedy.max_new_tokens = 1;
  const std::string one = model->generate(src, greedy);
  EXPECT_EQ(surface_tokens(one).size(), 1u) << one;
  greedy.max_new_tokens = 0;
  EXPECT_EQ(code_of([&] { model->generate(src, greedy); }), ErrorCode::SpecInvalid);
}

TEST_F(StubModels, EmptyGenerationIsAnError) {
  StubBehavior b = default_stub_behavior();
  b.generator = [](std::string_view, const CheckpointRef&) { return std::string("<pad> </s> <extra_id_0>"); };
  StubRuntime specials(b);
  const auto model = specials.open_checkpoint(checkpoint_by_id("t5-small"), Task::conditional_generation, TrainConfig{});
  EXPECT_EQ(code_of([&] { model->generate("x", DecodeOptions{}); }), ErrorCode::EmptyGeneration);
}

TEST_F(StubModels, PredictClassNormalized) {
  const auto model = runtime.open_checkpoint(checkpoint_by_id("bert-base"), Task::pair_classification, TrainConfig{});
  const auto p = model->predict_class("the bus is cheap", std::string_view("buses are cheap"));
  EXPECT_NEAR(p.match_probability + p.non_match_probability, 1.0, 1e-6);
  EXPECT_EQ(p.label, p.match_probability > 0.5 ? 1 : 0);
  const auto q = model->predict_class("the bus is cheap", std::string_view("buses are cheap"));
  EXPECT_EQ(p.match_probability, q.match_probability);
}

TEST_F(StubModels, FinetuneWritesArtifactLayout) {
  TempDir dir;
  auto req = pair_request(dir.path() / "m", memorize_pairs(), default_train_config(checkpoint_by_id("bert-base")));
  const ModelArtifact art = runtime.finetune(req);
  for (const char* f : {"weights.bin", "train_config.json", "metrics.jsonl", "fingerprint.txt", "artifact.json"}) {
    EXPECT_TRUE(std::filesystem::exists(art.dir / f)) << f;
  }
  EXPECT_EQ(art.metrics.size(), 3u);
  const auto back = read_artifact(art.dir);
  EXPECT_EQ(back.train_config, req.config);
  EXPECT_EQ(back.fingerprint, art.fingerprint);
  EXPECT_EQ(read_text_file(art.dir / "fingerprint.txt").substr(0, 64), art.fingerprint);
  const auto first_line = split(read_text_file(art.dir / "metrics.jsonl"), '\n').front();
  const auto m = nlohmann::json::parse(first_line);
  EXPECT_EQ(m.at("epoch"), 1);
  EXPECT_TRUE(m.contains("train_loss"));
  EXPECT_TRUE(m.contains("dev_macro_f1"));
}

TEST_F(StubModels, TamperedWeightsRejected) {
  TempDir dir;
  const ModelArtifact art = runtime.finetune(pair_request(dir.path() / "m", memorize_pairs(), quick_config(1)));
  write_text_file(art.weights_path(), "tampered");
  EXPECT_EQ(code_of([&] { runtime.load(read_artifact(art.dir)); }), ErrorCode::ArtifactCorrupt);
  NativeRuntime native;
  EXPECT_EQ(code_of([&] { native.load(art); }), ErrorCode::ArtifactCorrupt);
}

TEST_F(StubModels, IncompatibleTasks) {
  TempDir dir;
  FinetuneRequest bad = pair_request(dir.path() / "m", memorize_pairs(), quick_config(1));
  bad.task = Task::conditional_generation;
  EXPECT_EQ(code_of([&] { runtime.finetune(bad); }), ErrorCode::IncompatibleTask);
  FinetuneRequest gen = bad;
  gen.train = std::vector<GenerationExample>{{"a", "b"}};
  gen.dev = std::vector<GenerationExample>{};
  EXPECT_EQ(code_of([&] { runtime.finetune(gen); }), ErrorCode::IncompatibleTask);  // BERT cannot generate
}

TEST(Registry, StubAndReal) {
  EXPECT_EQ(make_runtime("stub")->name(), "stub");
  EXPECT_EQ(make_runtime("real")->name(), "native");
  EXPECT_THROW(make_runtime("quantum"), Error);
}

// ---------------------------------------------------------------------------
// Native backend

TEST(Native, ZeroStepsMatchesRawCheckpoint) {
  TempDir dir;
  NativeRuntime rt;
  TrainConfig c = quick_config(3);
  c.max_steps = 0;
  const auto art = rt.finetune(pair_request(dir.path() / "m", memorize_pairs(), c));
  EXPECT_TRUE(art.metrics.empty());
  const auto trained = rt.load(art);
  const auto raw = rt.open_checkpoint(art.checkpoint, Task::pair_classification, c);
  for (const auto& ex : toy_pairs(12)) {
    EXPECT_EQ(trained->predict_class(ex.text_a, *ex.text_b).match_probability,
              raw->predict_class(ex.text_a, *ex.text_b).match_probability);
  }
}

TEST(Native, FiftyStepsReduceLoss) {
  TempDir dir;
  NativeRuntime rt;
  TrainConfig c = quick_config(100);
  c.max_steps = 50;
  const auto art = rt.finetune(pair_request(dir.path() / "m", toy_pairs(32), c));
  ASSERT_FALSE(art.metrics.empty());
  EXPECT_LT(art.metrics.back().train_loss, art.initial_loss);
}

TEST(Native, MemorizesFourPairs) {
  TempDir dir;
  NativeRuntime rt;
  const auto art = rt.finetune(pair_request(dir.path() / "m", memorize_pairs(), quick_config(40)));
  const auto model = rt.load(art);
  for (const auto& ex : memorize_pairs()) {
    const auto p = model->predict_class(ex.text_a, *ex.text_b);
    EXPECT_EQ(p.label, ex.label) << ex.text_a;
    EXPECT_NEAR(p.match_probability + p.non_match_probability, 1.0, 1e-6);
  }
}

TEST(Native, SaveLoadRoundTripAndSeededDeterminism) {
  TempDir dir;
  NativeRuntime rt;
  const auto a = rt.finetune(pair_request(dir.path() / "a", toy_pairs(16), quick_config(3)));
  const auto b = rt.finetune(pair_request(dir.path() / "b", toy_pairs(16), quick_config(3)));
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) EXPECT_EQ(a.metrics[i].train_loss, b.metrics[i].train_loss);

  const auto m1 = rt.load(a);
  const auto m2 = rt.load(read_artifact(a.dir));
  for (const auto& ex : toy_pairs(8)) {
    const auto p = m1->predict_class(ex.text_a, *ex.text_b);
    const auto q = m2->predict_class(ex.text_a, *ex.text_b);
    EXPECT_EQ(p.label, q.label);
    EXPECT_NEAR(p.match_probability, q.match_probability, 1e-5);
  }
}

TEST(Native, PromptedScoringAndGeneration) {
  TempDir dir;
  NativeRuntime rt;
  const auto& t5 = checkpoint_by_id("t5-small");
  std::vector<PromptedExample> prompted;
  for (const auto& ex : memorize_pairs()) {
    prompted.push_back({t1_instance(t5, ex.text_a, *ex.text_b), ex.label ? "matched" : "not matched"});
  }
  FinetuneRequest req;
  req.checkpoint = t5;
  req.task = Task::prompted_classification;
  req.train = prompted;
  req.dev = prompted;
  req.config = quick_config(40);
  req.output_dir = dir.path() / "p";
  const auto model = rt.load(rt.finetune(req));
  const auto words = matched_verbalizer().all_words();
  for (std::size_t i = 0; i < prompted.size(); ++i) {
    const auto scores = model->score_answers(prompted[i].instance, words);
    ASSERT_EQ(scores.size(), 2u);
    EXPECT_EQ(verbalize(scores, matched_verbalizer()).label, memorize_pairs()[i].label);
  }

  std::vector<GenerationExample> gen{{"cloning is wrong This means <extra_id_0>.", "Cloning is unnatural."},
                                     {"buses are cheap This means <extra_id_0>.", "Transport is affordable."}};
  req.task = Task::conditional_generation;
  req.train = gen;
  req.dev = gen;
  req.config = quick_config(60);
  req.output_dir = dir.path() / "g";
  const auto generator = rt.load(rt.finetune(req));
  const DecodeOptions beam{DecodeOptions::Strategy::beam, 4, 32};
  EXPECT_EQ(generator->generate(gen[0].source, beam), "Cloning is unnatural.");
  const DecodeOptions greedy{DecodeOptions::Strategy::greedy, 1, 2};
  const std::string capped = generator->generate(gen[1].source, greedy);
  EXPECT_LE(surface_tokens(capped).size(), 2u);
  EXPECT_EQ(capped, generator->generate(gen[1].source, greedy));
}
