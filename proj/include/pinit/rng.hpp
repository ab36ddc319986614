#ifndef PINIT_RNG_HPP
#define PINIT_RNG_HPP

#include <cstdint>
#include <random>

namespace pinit {

using Rng = std::mt19937_64;

/// Independent random streams used inside one trial. Keeping them separate
/// means that a strategy drawing masks never shifts the weight init or the
/// batch order of another strategy run with the same seed.
enum class Stream : std::uint64_t { Init = 1, Masks = 2, Data = 3, Subset = 4 };

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace pinit

#endif  // PINIT_RNG_HPP
