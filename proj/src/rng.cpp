#include "kpa/rng.hpp"

namespace kpa {

__extension__ using u128 = unsigned __int128;

// Lemire's multiply-and-reject method.
std::uint64_t Rng::below(std::uint64_t bound) {
  u128 m = static_cast<u128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<u128>(next()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace kpa
