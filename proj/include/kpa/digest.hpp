#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace kpa {

/// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for feature hashing where a stable cheap hash is enough.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ull) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace kpa
