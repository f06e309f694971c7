#pragma once

#include <cstdint>
#include <random>

namespace pltts {

/// Seed for an independent stream keyed by (seed, step, stream). Lets
/// training resume mid-run with the same random draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint32_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), stream};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace pltts
