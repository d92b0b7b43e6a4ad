#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sirpdoa {

/// Generator used by every sampler. Streams are never shared between trials.
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable seed derivation: the result depends only on `base` and the keys,
/// so adding trials or SNR points never perturbs existing streams.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(base);
  for (std::uint64_t k : keys) {
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  }
  return h;
}

// Sub-stream identifiers used inside one Monte-Carlo trial.
enum class Stream : std::uint64_t {
  kWaveforms = 1,
  kNoise = 2,
  kTextureInit = 3,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream) {
  return derive_seed(base, {static_cast<std::uint64_t>(stream)});
}

}  // namespace sirpdoa
