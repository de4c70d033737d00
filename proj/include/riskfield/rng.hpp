#pragma once

// Reproducible random streams. Every trajectory gets its own mt19937_64
// seeded from (seed, stream index) through std::seed_seq, so ensembles come
// out identical no matter which thread or order evaluates them. Both engines
// and seed_seq are fully specified by the standard; uniforms are built from
// the top 53 bits directly because std::uniform_real_distribution is not.

#include <cstdint>
#include <random>

namespace riskfield {

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace riskfield
