#pragma once

#include <cstdint>
#include <string_view>

namespace velocity {

// Portable deterministic generator (xoshiro256**). The standard library's
// distributions are implementation-defined, so every draw the toolkit needs is
// derived here from raw 64-bit output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent sub-stream keyed by name ("sim", "ica", ...).
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  // Uniform double in [0, 1).
  double uniform();
  bool bernoulli(double p);
  double normal();
  // Marsaglia-Tsang; shape > 0, unit scale.
  double gamma(double shape);
  // Knuth's product method below mean 30, Hoermann's PTRS above.
  std::uint64_t poisson(double mean);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace velocity
