#include <algorithm>
#include <set>

#include "kpa/csv.hpp"
#include "kpa/error.hpp"
#include "kpa/prompt.hpp"
#include "kpa/resources.hpp"
#include "kpa/text.hpp"

namespace kpa {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string escape_literal(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '{' || c == '}') out.push_back(c);
    out.push_back(c);
  }
  return out;
}

SoftSegment parse_soft(std::string_view body, std::string_view where) {
  SoftSegment soft;
  if (const auto hash = body.rfind('#'); hash != std::string_view::npos) {
    const std::string_view id = body.substr(hash + 1);
    if (id.empty() || !std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail(ErrorCode::MalformedTemplate, std::string(where) + ": bad soft share id '" + std::string(id) + "'");
    }
    soft.share_id = std::stoi(std::string(id));
    body = body.substr(0, hash);
  }
  if (!body.empty()) soft.init_text = std::string(body);
  return soft;
}

std::map<int, std::string> shared_init_texts(const std::vector<Segment>& segments) {
  std::map<int, std::string> init;
  for (const auto& seg : segments) {
    if (const auto* soft = std::get_if<SoftSegment>(&seg); soft && soft->share_id && soft->init_text) {
      init.emplace(*soft->share_id, *soft->init_text);
    }
  }
  return init;
}

const std::string* find_binding(const Bindings& bindings, SlotId slot) {
  if (const auto it = bindings.find(slot); it != bindings.end()) return &it->second;
  const SlotId alias = slot == SlotId::X ? SlotId::X1 : slot == SlotId::X1 ? SlotId::X : slot;
  if (alias != slot) {
    if (const auto it = bindings.find(alias); it != bindings.end()) return &it->second;
  }
  return nullptr;
}

}  // namespace

std::string_view to_string(SlotId slot) {
  switch (slot) {
    case SlotId::X: return "X";
    case SlotId::X1: return "X1";
    case SlotId::X2: return "X2";
    case SlotId::Z: return "Z";
    case SlotId::Z1: return "Z1";
  }
  return "?";
}

std::optional<SlotId> parse_slot(std::string_view name) {
  if (name == "X") return SlotId::X;
  if (name == "X1") return SlotId::X1;
  if (name == "X2") return SlotId::X2;
  if (name == "Z") return SlotId::Z;
  if (name == "Z1") return SlotId::Z1;
  return std::nullopt;
}

bool is_answer_slot(SlotId slot) { return slot == SlotId::Z || slot == SlotId::Z1; }

std::string_view to_string(PromptKind kind) { return kind == PromptKind::cloze ? "cloze" : "prefix"; }

PromptTemplate::PromptTemplate(std::string name, std::vector<Segment> segments)
    : name_(std::move(name)), segments_(std::move(segments)) {
  std::set<SlotId> answers;
  std::map<int, int> share_uses;
  for (const auto& seg : segments_) {
    std::visit(overloaded{
                   [&](const LiteralSegment& lit) {
                     if (lit.text.empty()) fail(ErrorCode::MalformedTemplate, name_ + ": empty literal segment");
                   },
                   [&](const InputSegment& in) {
                     if (is_answer_slot(in.slot)) {
                       fail(ErrorCode::UnknownSlot, name_ + ": " + std::string(to_string(in.slot)) +
                                                        " is not an input slot");
                     }
                   },
                   [&](const AnswerSegment& ans) {
                     if (!is_answer_slot(ans.slot)) {
                       fail(ErrorCode::UnknownSlot, name_ + ": " + std::string(to_string(ans.slot)) +
                                                        " is not an answer slot");
                     }
                     if (!answers.insert(ans.slot).second) {
                       fail(ErrorCode::DuplicateAnswerSlot,
                            name_ + ": answer slot " + std::string(to_string(ans.slot)) + " appears twice");
                     }
                   },
                   [&](const SoftSegment& soft) {
                     if (soft.share_id) ++share_uses[*soft.share_id];
                     if (soft.init_text && soft.init_text->find_first_of("#{}") != std::string::npos) {
                       fail(ErrorCode::MalformedTemplate, name_ + ": soft init text may not contain #, { or }");
                     }
                   },
               },
               seg);
  }
  const auto init = shared_init_texts(segments_);
  for (const auto& seg : segments_) {
    const auto* soft = std::get_if<SoftSegment>(&seg);
    if (soft && soft->share_id && !soft->init_text && share_uses[*soft->share_id] < 2 &&
        !init.contains(*soft->share_id)) {
      fail(ErrorCode::DanglingShareId,
           name_ + ": soft share id " + std::to_string(*soft->share_id) + " refers to no other soft token");
    }
  }
  answer_slot_count_ = answers.size();
  kind_ = !segments_.empty() && std::holds_alternative<AnswerSegment>(segments_.back()) ? PromptKind::prefix
          : answers.empty()                                                           ? PromptKind::prefix
                                                                                      : PromptKind::cloze;
}

std::vector<SlotId> PromptTemplate::input_slots() const {
  std::vector<SlotId> slots;
  for (const auto& seg : segments_) {
    if (const auto* in = std::get_if<InputSegment>(&seg);
        in && std::find(slots.begin(), slots.end(), in->slot) == slots.end()) {
      slots.push_back(in->slot);
    }
  }
  return slots;
}

std::vector<SlotId> PromptTemplate::answer_slots() const {
  std::vector<SlotId> slots;
  for (const auto& seg : segments_) {
    if (const auto* ans = std::get_if<AnswerSegment>(&seg)) slots.push_back(ans->slot);
  }
  return slots;
}

std::size_t PromptTemplate::soft_token_count() const {
  return static_cast<std::size_t>(std::count_if(segments_.begin(), segments_.end(), [](const Segment& s) {
    return std::holds_alternative<SoftSegment>(s);
  }));
}

PromptTemplate parse_template(std::string_view spec, std::string name) {
  const std::string where = name.empty() ? std::string("<template>") : name;
  std::vector<Segment> segments;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) segments.emplace_back(LiteralSegment{std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const char c = spec[i];
    if (c == '}') {
      if (i + 1 < spec.size() && spec[i + 1] == '}') {
        literal.push_back('}');
        ++i;
        continue;
      }
      fail(ErrorCode::MalformedTemplate, where + ": unmatched '}' at offset " + std::to_string(i));
    }
    if (c != '{') {
      literal.push_back(c);
      continue;
    }
    if (i + 1 < spec.size() && spec[i + 1] == '{') {
      literal.push_back('{');
      ++i;
      continue;
    }
    const std::size_t close = spec.find('}', i + 1);
    if (close == std::string_view::npos) {
      fail(ErrorCode::MalformedTemplate, where + ": unterminated '{' at offset " + std::to_string(i));
    }
    const std::string_view body = spec.substr(i + 1, close - i - 1);
    flush();
    if (body.starts_with("soft:")) {
      segments.emplace_back(parse_soft(body.substr(5), where));
    } else if (const auto slot = parse_slot(body)) {
      if (is_answer_slot(*slot)) segments.emplace_back(AnswerSegment{*slot});
      else segments.emplace_back(InputSegment{*slot});
    } else {
      fail(ErrorCode::UnknownSlot, where + ": unknown slot {" + std::string(body) + "}");
    }
    i = close;
  }
  flush();
  return PromptTemplate(std::move(name), std::move(segments));
}

std::string serialize_template(const PromptTemplate& tmpl) {
  std::string out;
  for (const auto& seg : tmpl.segments()) {
    std::visit(overloaded{
                   [&](const LiteralSegment& lit) { out += escape_literal(lit.text); },
                   [&](const InputSegment& in) { out += "{" + std::string(to_string(in.slot)) + "}"; },
                   [&](const AnswerSegment& ans) { out += "{" + std::string(to_string(ans.slot)) + "}"; },
                   [&](const SoftSegment& soft) {
                     out += "{soft:" + soft.init_text.value_or("");
                     if (soft.share_id) out += "#" + std::to_string(*soft.share_id);
                     out += "}";
                   },
               },
               seg);
  }
  return out;
}

PromptTemplate load_template_file(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return parse_template(text, path.stem().string());
}

std::vector<std::string> builtin_template_names() {
  std::vector<std::string> names;
  for (const auto& key : resource_keys("templates/")) {
    names.push_back(key.substr(10, key.size() - 14));
  }
  return names;
}

const PromptTemplate& builtin_template(std::string_view name) {
  static const std::map<std::string, PromptTemplate, std::less<>> table = [] {
    std::map<std::string, PromptTemplate, std::less<>> t;
    for (const auto& n : builtin_template_names()) {
      t.emplace(n, parse_template(resource("templates/" + n + ".tpl"), n));
    }
    return t;
  }();
  const auto it = table.find(name);
  if (it == table.end()) fail(ErrorCode::ConfigInvalid, "no built-in template '" + std::string(name) + "'");
  return it->second;
}

PromptTemplate resolve_template(std::string_view name_or_path) {
  if (name_or_path.ends_with(".tpl")) return load_template_file(std::filesystem::path(name_or_path));
  return builtin_template(name_or_path);
}

PromptInstance render(const PromptTemplate& tmpl, const Bindings& bindings, std::string_view mask_marker) {
  if (mask_marker.empty()) fail(ErrorCode::SpecInvalid, "mask marker must be non-empty");
  for (const auto& [slot, _] : bindings) {
    if (is_answer_slot(slot)) {
      fail(ErrorCode::UnexpectedBinding,
           tmpl.name() + ": answer slot " + std::string(to_string(slot)) + " cannot be bound");
    }
  }
  PromptInstance inst;
  inst.template_name = tmpl.name();
  inst.mask_marker = std::string(mask_marker);
  inst.bindings = bindings;
  const auto shared_init = shared_init_texts(tmpl.segments());
  std::size_t soft_index = 0;
  for (const auto& seg : tmpl.segments()) {
    std::visit(overloaded{
                   [&](const LiteralSegment& lit) { inst.rendered_text += lit.text; },
                   [&](const InputSegment& in) {
                     const std::string* value = find_binding(bindings, in.slot);
                     if (!value) {
                       fail(ErrorCode::MissingBinding,
                            tmpl.name() + ": no binding for " + std::string(to_string(in.slot)));
                     }
                     inst.rendered_text += *value;
                   },
                   [&](const AnswerSegment&) {
                     inst.rendered_text += mask_marker;
                     ++inst.mask_count;
                   },
                   [&](const SoftSegment& soft) {
                     std::string text = soft.init_text.value_or("");
                     if (text.empty() && soft.share_id) {
                       if (const auto it = shared_init.find(*soft.share_id); it != shared_init.end()) text = it->second;
                     }
                     const std::string key = soft.share_id ? "id:" + std::to_string(*soft.share_id)
                                                           : "pos:" + std::to_string(soft_index);
                     inst.soft_positions.push_back({inst.rendered_text.size(), text.size(), key});
                     inst.rendered_text += text;
                     ++soft_index;
                   },
               },
               seg);
  }
  return inst;
}

std::string fill_answer(const PromptInstance& instance, std::string_view answer) {
  return replace_all(instance.rendered_text, instance.mask_marker, answer);
}

std::string strip_mask(std::string_view rendered, std::string_view mask_marker) {
  if (mask_marker.empty()) return collapse_whitespace(rendered);
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = rendered.find(mask_marker, pos);
    if (hit == std::string_view::npos) break;
    out.append(rendered.substr(pos, hit - pos));
    while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
    pos = hit + mask_marker.size();
  }
  out.append(rendered.substr(pos));
  return collapse_whitespace(out);
}

}  // namespace kpa
