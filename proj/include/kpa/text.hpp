#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

std::string_view trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);
/// Trims and collapses internal whitespace runs to one space.
std::string collapse_whitespace(std::string_view text);

/// Lower-cased word tokens: maximal runs of letters/digits (any byte >= 0x80
/// counts as a letter, so UTF-8 words stay whole), with ' and - kept when they
/// sit between two word characters. Punctuation never forms a token.
std::vector<std::string> word_tokens(std::string_view text);

/// Case-preserving tokens for sequence models: words as above, each
/// punctuation mark as its own token, and bracketed markers such as
/// "<extra_id_0>" or "[MASK]" kept whole.
std::vector<std::string> surface_tokens(std::string_view text);

/// Inverse of surface_tokens up to whitespace.
std::string detokenize(std::span<const std::string> tokens);

/// Replaces every occurrence of `from` (non-empty) with `to`.
std::string replace_all(std::string_view text, std::string_view from, std::string_view to);
std::size_t count_occurrences(std::string_view text, std::string_view needle);

std::vector<std::string> split(std::string_view text, char delimiter);

}  // namespace kpa
