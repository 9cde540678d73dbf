#include "kpa/text.hpp"

#include <cctype>

namespace kpa {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

bool is_joiner(char c) { return c == '\'' || c == '-'; }

// Length of the word starting at text[i], where text[i] is a word character.
std::size_t word_length(std::string_view text, std::size_t i) {
  std::size_t j = i;
  while (j < text.size()) {
    if (is_word_char(text[j])) {
      ++j;
    } else if (is_joiner(text[j]) && j + 1 < text.size() && is_word_char(text[j + 1]) && j > i) {
      ++j;
    } else {
      break;
    }
  }
  return j - i;
}

// Length of a bracketed marker such as <mask> or [SEP], or 0.
std::size_t marker_length(std::string_view text, std::size_t i) {
  const char open = text[i];
  const char close = open == '<' ? '>' : open == '[' ? ']' : '\0';
  if (close == '\0') return 0;
  for (std::size_t j = i + 1; j < text.size(); ++j) {
    if (text[j] == close) return j > i + 1 ? j - i + 1 : 0;
    if (is_space(text[j]) || text[j] == open) return 0;
  }
  return 0;
}

}  // namespace

std::string_view trim(std::string_view text) {
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(text)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < text.size();) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    const std::size_t n = word_length(text, i);
    tokens.push_back(to_lower_ascii(text.substr(i, n)));
    i += n;
  }
  return tokens;
}

std::vector<std::string> surface_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_word_char(c)) {
      const std::size_t n = word_length(text, i);
      tokens.emplace_back(text.substr(i, n));
      i += n;
    } else if (const std::size_t n = marker_length(text, i); n > 0) {
      tokens.emplace_back(text.substr(i, n));
      i += n;
    } else {
      tokens.emplace_back(1, c);
      ++i;
    }
  }
  return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
  static constexpr std::string_view no_space_before = ".,!?;:)]}%";
  static constexpr std::string_view no_space_after = "([{";
  std::string out;
  bool quote_open = false;
  bool suppress_next_space = true;
  for (const auto& token : tokens) {
    bool space = !suppress_next_space;
    suppress_next_space = false;
    if (token.size() == 1 && no_space_before.find(token[0]) != std::string_view::npos) space = false;
    if (token == "\"") {
      if (quote_open) space = false;
      else suppress_next_space = true;
      quote_open = !quote_open;
    }
    if (token.size() == 1 && no_space_after.find(token[0]) != std::string_view::npos) {
      suppress_next_space = true;
    }
    if (space) out.push_back(' ');
    out += token;
  }
  return out;
}

std::string replace_all(std::string_view text, std::string_view from, std::string_view to) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = text.find(from, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(to);
    pos = hit + from.size();
  }
  out.append(text.substr(pos));
  return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::vector<std::string> split(std::string_view text, char delimiter) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t hit = text.find(delimiter, start);
    parts.emplace_back(text.substr(start, hit == std::string_view::npos ? std::string_view::npos : hit - start));
    if (hit == std::string_view::npos) break;
    start = hit + 1;
  }
  return parts;
}

}  // namespace kpa
