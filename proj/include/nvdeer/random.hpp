#pragma once

#include <cstdint>
#include <random>

#include "nvdeer/geometry.hpp"

namespace nvdeer {

// Deterministic generator for substream `stream` of a top-level seed. The
// same (seed, stream) pair yields the same sequence on every run and in any
// evaluation order.
class Substream {
public:
  Substream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                      std::uint32_t(stream >> 32), 0x6e76u};
    engine_.seed(seq);
  }

  // Uniform on [0, 1), 53 random bits; independent of the standard library's
  // distribution implementations.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on the unit sphere (Archimedes: z uniform on [-1, 1]).
  Vector3<double> unit_sphere() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, constants::two_pi);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace nvdeer
