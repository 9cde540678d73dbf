#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "kpa/corpus.hpp"
#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/prompt.hpp"
#include "kpa/rng.hpp"
#include "kpa/text.hpp"
#include "test_support.hpp"

using namespace kpa;

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

std::map<std::string, std::string> golden() {
  std::map<std::string, std::string> out;
  std::ifstream in(kpa::testing::fixture("golden_templates.tsv"));
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

// Two-way softmax written out directly.
double p_label1(double s1, double s0) { return 1.0 / (1.0 + std::exp(s0 - s1)); }

const std::string kArgument =
    "Urbanization destroys the enviroment, and mankind should be finding ways of utilising the space already "
    "occupied more efficiently instead";
const std::string kKeyPoint = "Urbanization harms the environment";

}  // namespace

TEST(Template, BuiltinT2Segments) {
  const auto& t2 = builtin_template("T2");
  const std::vector<Segment> expected{LiteralSegment{"The argument: "}, InputSegment{SlotId::X1},
                                      LiteralSegment{" is "},           AnswerSegment{SlotId::Z},
                                      LiteralSegment{" with the keypoint: "}, InputSegment{SlotId::X2}};
  EXPECT_EQ(t2.segments(), expected);
  EXPECT_EQ(t2.kind(), PromptKind::cloze);
  EXPECT_EQ(t2.answer_slot_count(), 1u);
}

TEST(Template, MinimalInputOnly) {
  const auto t = parse_template("{X1}", "solo");
  EXPECT_EQ(t.segments(), (std::vector<Segment>{InputSegment{SlotId::X1}}));
  EXPECT_EQ(t.answer_slot_count(), 0u);
  EXPECT_EQ(render(t, {{SlotId::X1, "a"}}, "<mask>").rendered_text, "a");
}

TEST(Template, BuiltinT5SoftTokens) {
  const auto& t5 = builtin_template("T5");
  std::vector<SoftSegment> soft;
  for (const auto& s : t5.segments()) {
    if (const auto* p = std::get_if<SoftSegment>(&s)) soft.push_back(*p);
  }
  ASSERT_EQ(soft.size(), 3u);
  EXPECT_EQ(soft[0], (SoftSegment{"Does", std::nullopt}));
  EXPECT_EQ(soft[1], (SoftSegment{"the", 1}));
  EXPECT_EQ(soft[2], (SoftSegment{std::nullopt, 1}));
  EXPECT_EQ(t5.soft_token_count(), 3u);
  EXPECT_EQ(t5.kind(), PromptKind::prefix);

  const auto inst = render(t5, {{SlotId::X1, "a"}, {SlotId::X2, "b"}}, "<extra_id_0>");
  ASSERT_EQ(inst.soft_positions.size(), 3u);
  EXPECT_EQ(inst.soft_positions[1].share_key, inst.soft_positions[2].share_key);
  EXPECT_NE(inst.soft_positions[0].share_key, inst.soft_positions[1].share_key);
  EXPECT_EQ(inst.rendered_text.substr(inst.soft_positions[2].offset, inst.soft_positions[2].length), "the");
}

TEST(Template, GoldenStringsUnderSubstitution) {
  const auto strings = golden();
  ASSERT_EQ(strings.size(), 9u);
  for (const auto& [name, expected] : strings) {
    const auto& t = builtin_template(name);
    Bindings b{{SlotId::X1, "[X1]"}};
    if (name.size() == 2) b[SlotId::X2] = "[X2]";
    const std::string marker = name.starts_with("T6") || name.starts_with("T7") ? "[Z1]" : "[Z]";
    EXPECT_EQ(render(t, b, marker).rendered_text, expected) << name;
  }
}

TEST(Template, WorkedUrbanizationExample) {
  // The published worked input lower-cases the argument's first letter, puts a
  // comma after it and a full stop after the key point; "key point" is spelled
  // with a space there.
  const auto t = parse_template("The argument: {X1} is {Z} with the key point: {X2}", "T2-worked");
  const std::string x1 = "u" + kArgument.substr(1) + ",";
  const auto inst = render(t, {{SlotId::X1, x1}, {SlotId::X2, add_full_stops(kKeyPoint)}}, "<mask>");
  EXPECT_EQ(inst.mask_count, 1u);
  EXPECT_EQ(fill_answer(inst, "matched"),
            "The argument: urbanization destroys the enviroment, and mankind should be finding ways of utilising "
            "the space already occupied more efficiently instead, is matched with the key point: Urbanization "
            "harms the environment.");
}

TEST(Template, T6PositiveRender) {
  const std::string arg = "by copying something you can not get a pure copy.";
  const auto inst = render(builtin_template("T6.positive"), {{SlotId::X1, arg}}, "<mask>");
  EXPECT_EQ(inst.rendered_text, arg + " This means <mask>.");
  EXPECT_EQ(strip_mask(inst.rendered_text, "<mask>"), arg + " This means.");
}

TEST(Template, RoundTripAllBuiltins) {
  for (const auto& name : builtin_template_names()) {
    const auto& t = builtin_template(name);
    EXPECT_EQ(parse_template(serialize_template(t), name), t) << name;
  }
  const auto braces = parse_template("a {{literal}} {X1} {Z}", "b");
  EXPECT_EQ(parse_template(serialize_template(braces), "b"), braces);
}

TEST(Template, ParseErrors) {
  EXPECT_EQ(code_of([] { parse_template("{X9} {Z}"); }), ErrorCode::UnknownSlot);
  EXPECT_EQ(code_of([] { parse_template("{X1} {Z} and {Z}"); }), ErrorCode::DuplicateAnswerSlot);
  EXPECT_EQ(code_of([] { parse_template("{X1} {soft:#4} {Z}"); }), ErrorCode::DanglingShareId);
  EXPECT_EQ(code_of([] { parse_template("{X1} {Z"); }), ErrorCode::MalformedTemplate);
}

TEST(Template, RenderErrors) {
  const auto& t1 = builtin_template("T1");
  EXPECT_EQ(code_of([&] { render(t1, {{SlotId::X1, "a"}}, "<mask>"); }), ErrorCode::MissingBinding);
  EXPECT_EQ(code_of([&] { render(t1, {{SlotId::X1, "a"}, {SlotId::X2, "b"}, {SlotId::Z, "z"}}, "<mask>"); }),
            ErrorCode::UnexpectedBinding);
}

TEST(Template, XAliasesX1) {
  const auto t = parse_template("{X} This means {Z1}.", "alias");
  EXPECT_EQ(render(t, {{SlotId::X1, "arg"}}, "#").rendered_text, "arg This means #.");
}

TEST(Template, RenderDeterministicAndInjective) {
  Rng rng(5);
  const auto& t = builtin_template("T1");
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) {
    const std::string a = "arg" + std::to_string(i);
    const std::string b = "kp" + std::to_string(rng.below(1000));
    const auto r1 = render(t, {{SlotId::X1, a}, {SlotId::X2, b}}, "<mask>");
    const auto r2 = render(t, {{SlotId::X1, a}, {SlotId::X2, b}}, "<mask>");
    EXPECT_EQ(r1, r2);
    EXPECT_TRUE(seen.insert(r1.rendered_text).second);
  }
}

TEST(Template, TemplateFileNameFromStem) {
  kpa::testing::TempDir dir;
  write_text_file(dir.path() / "mine.tpl", "{X1} => {X2}? {Z}\n");
  const auto t = resolve_template((dir.path() / "mine.tpl").string());
  EXPECT_EQ(t.name(), "mine");
  EXPECT_EQ(t.answer_slot_count(), 1u);
}

TEST(Verbalizer, MatchedExample) {
  const auto v = verbalize({{"matched", 2.0}, {"not matched", 0.0}}, matched_verbalizer());
  EXPECT_EQ(v.label, 1);
  EXPECT_NEAR(v.match_probability, p_label1(2.0, 0.0), 1e-12);
  EXPECT_NEAR(v.match_probability, 0.881, 5e-4);
}

TEST(Verbalizer, TieGoesToNonMatch) {
  const auto v = verbalize({{"matched", 0.3}, {"not matched", 0.3}}, matched_verbalizer());
  EXPECT_EQ(v.label, 0);
  EXPECT_DOUBLE_EQ(v.match_probability, 0.5);
}

TEST(Verbalizer, YesNoExample) {
  const auto v = verbalize({{"Yes", -1.0}, {"No", 3.0}}, yes_no_verbalizer());
  EXPECT_EQ(v.label, 0);
  EXPECT_NEAR(v.match_probability, p_label1(-1.0, 3.0), 1e-12);
  EXPECT_NEAR(v.match_probability, 0.018, 5e-4);
}

TEST(Verbalizer, MaxOverLabelWords) {
  const Verbalizer v("multi", {{0, {"no", "nope"}}, {1, {"yes", "yep"}}});
  const auto out = verbalize({{"no", -5}, {"nope", 1}, {"yes", 0}, {"yep", 0.5}}, v);
  EXPECT_EQ(out.label, 0);
  EXPECT_NEAR(out.match_probability, p_label1(0.5, 1.0), 1e-12);
}

TEST(Verbalizer, ShiftInvariance) {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-10, 10), b = rng.uniform(-10, 10), c = rng.uniform(-100, 100);
    const auto base = verbalize({{"Yes", a}, {"No", b}}, yes_no_verbalizer());
    const auto shifted = verbalize({{"Yes", a + c}, {"No", b + c}}, yes_no_verbalizer());
    EXPECT_EQ(base.label, shifted.label);
    EXPECT_NEAR(base.match_probability, shifted.match_probability, 1e-9);
  }
}

TEST(Verbalizer, Errors) {
  EXPECT_EQ(code_of([] { verbalize({{"matched", 1.0}}, matched_verbalizer()); }), ErrorCode::MissingWordScore);
  EXPECT_EQ(code_of([] { Verbalizer("bad", {{0, {"x"}}, {1, {"x"}}}); }), ErrorCode::InvalidVerbalizer);
  EXPECT_EQ(code_of([] { Verbalizer("bad", {{1, {"x"}}}); }), ErrorCode::InvalidVerbalizer);
}

TEST(Verbalizer, PerTemplateDefaults) {
  for (const char* t : {"T1", "T2"}) EXPECT_EQ(verbalizer_for_template(t).target_word(1), "matched");
  for (const char* t : {"T3", "T4", "T5"}) {
    EXPECT_EQ(verbalizer_for_template(t).target_word(1), "Yes");
    EXPECT_EQ(verbalizer_for_template(t).target_word(0), "No");
  }
  EXPECT_EQ(matched_verbalizer().target_word(0), "not matched");
}
