#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "nvdeer/deer_single.hpp"

namespace nvdeer {

// n * mean(c^2) for a bath of weakly coupled target spins.
struct EnsembleCoupling {
  double n_c2{0};

  EnsembleCoupling() = default;
  explicit EnsembleCoupling(double value);
};

// Fixed couplings c_k of the bath spins. Orientations are not stored: they
// are redrawn for every shot.
struct SpinBathSample {
  std::vector<double> couplings;

  static SpinBathSample uniform(std::size_t n_spins, double n_c2);
  double n_c2() const;
};

// sigma^2 = n_c2 * 4 Omega^2 / (3 (Omega^2 + Delta^2)) * sin^2(alpha / 2)
double ensemble_variance(const EnsembleCoupling& coupling, const DrivePulse& pulse);

// exp(-sigma^2 / 2)
DeerSignal ensemble_signal(const EnsembleCoupling& coupling, const DrivePulse& pulse);

// Depth of the DEER dip, 1 - f, relative to its n_c2 -> infinity limit.
double ensemble_dip_depth(const EnsembleCoupling& coupling, const DrivePulse& pulse);

// Many-spin Monte Carlo: each shot draws a shared phi_rand and independent
// orientations for every bath spin and accumulates
//   phi = sum_k c_k [(R_B R_a e_k - e_k) . e_B].
DeerSignal ensemble_signal_montecarlo(const SpinBathSample& bath, const EchoConfig& echo, const DrivePulse& pulse,
                                      std::size_t n_samples, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace nvdeer
