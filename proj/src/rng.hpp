#pragma once

#include <cstdint>
#include <random>

#include "tensor.hpp"

namespace diffsketch {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for stream `index` under a parent seed; also used for per-iteration seeds.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix64(mix64(parent) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

// Box-Muller normal draws so the sequence is fixed by the engine alone, not by
// the standard library's distribution implementation.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::uint64_t next() { return rng_(); }

 private:
  Rng rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Tensor randn(const Shape& shape, std::uint64_t seed, double stddev = 1.0) {
  NormalSampler n(seed);
  Tensor t(shape);
  for (auto& v : t.raw()) v = stddev * n();
  return t;
}

}  // namespace diffsketch
