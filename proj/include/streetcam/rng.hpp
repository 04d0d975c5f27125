#pragma once

#include <cstdint>
#include <string_view>

namespace streetcam {

/// xoshiro256** seeded through splitmix64. Every draw used by the pipeline
/// goes through the helpers below, so sequences are identical on every
/// platform and standard library (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  /// Poisson draw by counting exponential gaps; cost is linear in the mean.
  std::uint64_t poisson(double mean);
  double exponential(double rate);

  /// Independent stream for a named sub-task (city, seed index, ...).
  static Rng substream(std::uint64_t master, std::string_view name);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view data);

}  // namespace streetcam
