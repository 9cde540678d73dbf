#include "kpa/resources.hpp"

#include <map>

#include "kpa/error.hpp"

namespace kpa {
namespace detail {
const std::map<std::string, std::string_view, std::less<>>& resource_table();
}

std::string_view resource(std::string_view key) {
  const auto& table = detail::resource_table();
  const auto it = table.find(key);
  if (it == table.end()) fail(ErrorCode::FileNotFound, "embedded resource " + std::string(key));
  return it->second;
}

bool has_resource(std::string_view key) { return detail::resource_table().contains(key); }

std::vector<std::string> resource_keys(std::string_view prefix) {
  std::vector<std::string> keys;
  for (const auto& [key, _] : detail::resource_table()) {
    if (key.starts_with(prefix)) keys.push_back(key);
  }
  return keys;
}

}  // namespace kpa
