#pragma once

#include <cstdint>
#include <random>

namespace delaynet {

/// Seeded random source shared by parameter init, data shuffling and the
/// plant simulator. Thin wrapper so every draw site goes through one engine
/// type and stays reproducible for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean, double stdev) {
    std::normal_distribution<double> d(mean, stdev);
    return d(engine_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  /// Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace delaynet
