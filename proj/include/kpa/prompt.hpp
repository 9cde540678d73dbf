#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kpa {

/// Template slots. X1 binds the argument, X2 the key point; X aliases X1 in
/// single-input templates. Z and Z1 are answer slots.
enum class SlotId { X, X1, X2, Z, Z1 };

std::string_view to_string(SlotId slot);
std::optional<SlotId> parse_slot(std::string_view name);
bool is_answer_slot(SlotId slot);

struct LiteralSegment {
  std::string text;
  friend bool operator==(const LiteralSegment&, const LiteralSegment&) = default;
};

struct InputSegment {
  SlotId slot;
  friend bool operator==(const InputSegment&, const InputSegment&) = default;
};

struct AnswerSegment {
  SlotId slot;
  friend bool operator==(const AnswerSegment&, const AnswerSegment&) = default;
};

/// Trainable pseudo-token. Segments with the same share_id are one token.
struct SoftSegment {
  std::optional<std::string> init_text;
  std::optional<int> share_id;
  friend bool operator==(const SoftSegment&, const SoftSegment&) = default;
};

using Segment = std::variant<LiteralSegment, InputSegment, AnswerSegment, SoftSegment>;

enum class PromptKind {
  cloze,   // answer slot followed by more template
  prefix,  // answer slot is the final segment (or no answer slot at all)
};

std::string_view to_string(PromptKind kind);

class PromptTemplate {
 public:
  PromptTemplate() = default;
  /// Validates segments; see parse_template for the error conditions.
  PromptTemplate(std::string name, std::vector<Segment> segments);

  const std::string& name() const { return name_; }
  const std::vector<Segment>& segments() const { return segments_; }
  PromptKind kind() const { return kind_; }
  std::size_t answer_slot_count() const { return answer_slot_count_; }
  std::vector<SlotId> input_slots() const;
  std::vector<SlotId> answer_slots() const;
  std::size_t soft_token_count() const;

  friend bool operator==(const PromptTemplate& a, const PromptTemplate& b) {
    return a.name_ == b.name_ && a.segments_ == b.segments_;
  }

 private:
  std::string name_;
  std::vector<Segment> segments_;
  PromptKind kind_ = PromptKind::prefix;
  std::size_t answer_slot_count_ = 0;
};

/// Mini-language: plain text, {X}/{X1}/{X2}/{Z}/{Z1} slot markers,
/// {soft:init}, {soft:init#id} and {soft:#id} soft tokens; {{ and }} are
/// literal braces.
PromptTemplate parse_template(std::string_view spec, std::string name = "");
std::string serialize_template(const PromptTemplate& tmpl);

/// Reads a template file; the name is the file stem.
PromptTemplate load_template_file(const std::filesystem::path& path);

/// T1..T5, T6.positive, T6.negative, T7.positive, T7.negative.
const PromptTemplate& builtin_template(std::string_view name);
std::vector<std::string> builtin_template_names();

/// Resolves a built-in name, or reads a file when `name_or_path` ends in .tpl.
PromptTemplate resolve_template(std::string_view name_or_path);

struct SoftPosition {
  std::size_t offset;  // byte offset into rendered_text
  std::size_t length;  // bytes of rendered init text (may be 0)
  std::string share_key;  // "id:<n>" for shared tokens, "pos:<k>" otherwise

  friend bool operator==(const SoftPosition&, const SoftPosition&) = default;
};

using Bindings = std::map<SlotId, std::string>;

struct PromptInstance {
  std::string template_name;
  std::string rendered_text;
  std::string mask_marker;
  std::size_t mask_count = 0;
  std::vector<SoftPosition> soft_positions;
  Bindings bindings;

  friend bool operator==(const PromptInstance&, const PromptInstance&) = default;
};

/// Substitutes input slots and writes `mask_marker` for every answer slot.
/// Soft tokens render as their init text (shared tokens reuse the text of
/// the first segment that carries it) and are reported in soft_positions.
PromptInstance render(const PromptTemplate& tmpl, const Bindings& bindings, std::string_view mask_marker);

/// Replaces each mask marker with `answer`.
std::string fill_answer(const PromptInstance& instance, std::string_view answer);

/// Rendered text with mask markers and surrounding whitespace removed.
std::string strip_mask(std::string_view rendered, std::string_view mask_marker);

// ---------------------------------------------------------------------------

struct Verbalized {
  int label = 0;
  double match_probability = 0.5;
};

class Verbalizer {
 public:
  Verbalizer() = default;
  /// Requires labels 0 and 1, non-empty disjoint word lists.
  Verbalizer(std::string name, std::map<int, std::vector<std::string>> label_words);

  const std::string& name() const { return name_; }
  const std::map<int, std::vector<std::string>>& label_words() const { return label_words_; }
  std::vector<std::string> all_words() const;
  /// First word of the label's list; used as the training target.
  const std::string& target_word(int label) const;

 private:
  std::string name_;
  std::map<int, std::vector<std::string>> label_words_;
};

/// {1: matched, 0: not matched}
const Verbalizer& matched_verbalizer();
/// {1: Yes, 0: No}
const Verbalizer& yes_no_verbalizer();
/// The verbalizer paired with a built-in classification template.
const Verbalizer& verbalizer_for_template(std::string_view template_name);
const Verbalizer& verbalizer_by_name(std::string_view name);

/// Per-label score is the max over that label's words; probability is the
/// softmax mass of label 1. Ties predict label 0.
Verbalized verbalize(const std::map<std::string, double>& word_scores, const Verbalizer& verbalizer);

}  // namespace kpa
