#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace energylens {

using Rng = std::mt19937_64;

/// Derives an independent generator from a root seed and a path of indices
/// (start number, tree number, generation/individual, ...). Streams never
/// share consumption order, so results do not depend on evaluation order.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  std::seed_seq::result_type words[16];
  std::size_t n = 0;
  words[n++] = static_cast<std::uint32_t>(seed);
  words[n++] = static_cast<std::uint32_t>(seed >> 32);
  for (std::uint64_t p : path) {
    if (n + 2 > 16) break;
    words[n++] = static_cast<std::uint32_t>(p);
    words[n++] = static_cast<std::uint32_t>(p >> 32);
  }
  std::seed_seq seq(words, words + n);
  return Rng(seq);
}

}  // namespace energylens
