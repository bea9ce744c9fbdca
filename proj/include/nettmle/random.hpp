#pragma once

#include <cstdint>
#include <random>

#include "nettmle/core.hpp"

namespace nettmle {

/// Seed streams. A replicate seed is derive_seed(master, stream, index), so
/// replicate k of any stage can be regenerated without running 0..k-1.
enum class Stream : std::uint64_t {
  Network = 1,
  Data = 2,
  Estimate = 3,
  Bootstrap = 4,
  Truth = 5,
  Draw = 6,
  Decomposition = 7,
  Latent = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based derivation: splitmix64 applied to master, stream and index in turn.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() { return normal_(engine_); }
  /// Uniform integer in [0, n).
  Index index(Index n) { return static_cast<Index>(engine_() % static_cast<std::uint64_t>(n)); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace nettmle
