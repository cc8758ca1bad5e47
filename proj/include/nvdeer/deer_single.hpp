#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nvdeer/geometry.hpp"

namespace nvdeer {

// Target-spin drive pulse. Frequencies are ordinary frequencies (MHz),
// the length is in microseconds.
struct DrivePulse {
  double rabi_MHz{0};
  double detuning_MHz{0};
  double length_us{0};

  DrivePulse() = default;
  DrivePulse(double rabi, double detuning, double length);

  double effective_frequency_MHz() const;
  // alpha = 2 pi t_p sqrt(Omega^2 + Delta^2)
  double rotation_angle() const;
};

struct EchoConfig {
  double tau_us{6.0};
  UnitVector3d field_direction = UnitVector3d::unit_z();

  EchoConfig() = default;
  EchoConfig(double tau, const UnitVector3d& e_B);
};

struct QuadratureSpec {
  std::size_t n_phi_rand{32};
  std::size_t n_cos_theta1{32};
  std::size_t n_phi1{32};

  void validate() const;
  QuadratureSpec doubled() const { return {2 * n_phi_rand, 2 * n_cos_theta1, 2 * n_phi1}; }
};

// Normalized <cos phi>, together with an error estimate. For the quadrature
// the estimate is the change under doubling every node count; for Monte
// Carlo it is the standard error of the mean.
struct DeerSignal {
  double value{1.0};
  bool converged{true};
  double est_error{0.0};
};

// Drive axis in the lab frame: (Omega, 0, Delta) expressed in the target
// rotating frame whose third axis is e_B and whose first axis is the fixed
// perpendicular e_B.any_perpendicular().
UnitVector3d drive_axis(const UnitVector3d& e_B, const DrivePulse& pulse);

// phi = c * [(R_B(phi_rand) R_a(alpha) e_1 - e_1) . e_B]
double accumulated_phase(double c, const UnitVector3d& e_B, const UnitVector3d& e_1, const DrivePulse& pulse,
                         double phi_rand);

// Mean of cos(phi) over phi_rand, cos(theta_1) and phi_1 at fixed node
// counts, without the doubling estimate.
double deer_average_fixed(double c, const EchoConfig& echo, const DrivePulse& pulse, const QuadratureSpec& quad);

// Gauss-Legendre on cos(theta_1), periodic trapezoid on phi_1 and phi_rand.
// Evaluates at quad and quad.doubled(); returns the refined value and the
// difference as est_error. converged is est_error <= tolerance.
DeerSignal deer_signal_quadrature(double c, const EchoConfig& echo, const DrivePulse& pulse,
                                  const QuadratureSpec& quad = {}, double tolerance = 1e-4);

// Uniform sampling of e_1 on the sphere and phi_rand on the circle from
// Substream(seed, stream). n_samples >= 1000.
DeerSignal deer_signal_montecarlo(double c, const EchoConfig& echo, const DrivePulse& pulse, std::size_t n_samples,
                                  std::uint64_t seed, std::uint64_t stream = 0);

// Detuning of the first revival (alpha = 2 pi): sqrt(1/t_p^2 - Omega^2).
double revival_detuning(const DrivePulse& pulse);

enum class Estimator { quadrature, montecarlo };

struct SweepOptions {
  Estimator estimator{Estimator::quadrature};
  QuadratureSpec quad{};
  double tolerance{1e-4};
  std::size_t n_samples{100000};
  std::uint64_t seed{0};
  unsigned threads{1};
};

using SweepPoint = std::pair<double, DeerSignal>;

// f(Delta) at fixed Omega and t_p. Grid must be finite and sorted.
std::vector<SweepPoint> deer_spectrum(double c, const EchoConfig& echo, double rabi_MHz, double length_us,
                                      std::span<const double> detuning_grid_MHz, const SweepOptions& opts = {});

// f(t_p) at fixed Omega and Delta. Grid must be finite and sorted.
std::vector<SweepPoint> deer_rabi(double c, const EchoConfig& echo, double rabi_MHz, double detuning_MHz,
                                  std::span<const double> length_grid_us, const SweepOptions& opts = {});

// Throws DomainError unless the grid is non-empty, finite and ascending.
void validate_grid(std::span<const double> grid, const char* what);

}  // namespace nvdeer
