#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kpa {

/// Text files compiled in from data/ (stopword list, built-in templates).
/// Keys are paths relative to data/, e.g. "templates/T1.tpl".
std::string_view resource(std::string_view key);
bool has_resource(std::string_view key);
std::vector<std::string> resource_keys(std::string_view prefix);

}  // namespace kpa
