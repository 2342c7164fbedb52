#pragma once

#include <cstdint>
#include <random>

namespace pdsep {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent stream identified by `tag` under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Seeded generator used everywhere randomness is needed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pdsep
