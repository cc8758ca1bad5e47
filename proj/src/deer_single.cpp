#include "nvdeer/deer_single.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvdeer/parallel.hpp"
#include "nvdeer/quadrature.hpp"
#include "nvdeer/random.hpp"

namespace nvdeer {

DrivePulse::DrivePulse(double rabi, double detuning, double length)
    : rabi_MHz(rabi), detuning_MHz(detuning), length_us(length) {
  if (!std::isfinite(rabi) || !std::isfinite(detuning) || !std::isfinite(length)) {
    throw DomainError("DrivePulse: non-finite parameter");
  }
  if (rabi < 0) throw DomainError("DrivePulse: Rabi frequency must be >= 0");
  if (length < 0) throw DomainError("DrivePulse: pulse length must be >= 0");
}

double DrivePulse::effective_frequency_MHz() const { return std::hypot(rabi_MHz, detuning_MHz); }

double DrivePulse::rotation_angle() const { return constants::two_pi * length_us * effective_frequency_MHz(); }

EchoConfig::EchoConfig(double tau, const UnitVector3d& e_B) : tau_us(tau), field_direction(e_B) {
  if (!(tau > 0) || !std::isfinite(tau)) throw DomainError("EchoConfig: tau must be positive");
}

void QuadratureSpec::validate() const {
  if (n_phi_rand < 4 || n_cos_theta1 < 4 || n_phi1 < 4) {
    throw DomainError("QuadratureSpec: every node count must be >= 4");
  }
}

UnitVector3d drive_axis(const UnitVector3d& e_B, const DrivePulse& pulse) {
  const double w = pulse.effective_frequency_MHz();
  if (w == 0.0) return e_B;
  const Vector3<double> u = e_B.any_perpendicular().vector();
  return UnitVector3d(pulse.rabi_MHz * u + pulse.detuning_MHz * e_B.vector());
}

double accumulated_phase(double c, const UnitVector3d& e_B, const UnitVector3d& e_1, const DrivePulse& pulse,
                         double phi_rand) {
  const UnitVector3d nutated = rotate_axis_angle(e_1, drive_axis(e_B, pulse), pulse.rotation_angle());
  const UnitVector3d precessed = rotate_axis_angle(nutated, e_B, phi_rand);
  return c * (precessed.vector() - e_1.vector()).dot(e_B.vector());
}

double deer_average_fixed(double c, const EchoConfig& echo, const DrivePulse& pulse, const QuadratureSpec& quad) {
  quad.validate();
  const UnitVector3d& e_B = echo.field_direction;
  const Matrix3<double> r_a = rotation_matrix(drive_axis(e_B, pulse), pulse.rotation_angle());

  // Row k is e_B^T R_B(phi_k) R_a, so the phase is c * (row_k . e_1 - e_B . e_1).
  const QuadratureRule phi_rand = periodic_trapezoid(quad.n_phi_rand);
  std::vector<Eigen::RowVector3d> rows(quad.n_phi_rand);
  for (std::size_t k = 0; k < quad.n_phi_rand; ++k) {
    rows[k] = e_B.vector().transpose() * rotation_matrix(e_B, phi_rand.nodes[k]) * r_a;
  }

  const QuadratureRule cos_theta = gauss_legendre(quad.n_cos_theta1);
  const QuadratureRule phi1 = periodic_trapezoid(quad.n_phi1);

  double total = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < cos_theta.nodes.size(); ++i) {
    const double u = cos_theta.nodes[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
    for (std::size_t j = 0; j < phi1.nodes.size(); ++j) {
      const Vector3<double> e_1(s * std::cos(phi1.nodes[j]), s * std::sin(phi1.nodes[j]), u);
      const double w_ij = cos_theta.weights[i] * phi1.weights[j];
      const double proj = e_B.dot(e_1);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const double w = w_ij * phi_rand.weights[k];
        total += w * std::cos(c * (rows[k].dot(e_1) - proj));
        norm += w;
      }
    }
  }
  return std::clamp(total / norm, -1.0, 1.0);
}

DeerSignal deer_signal_quadrature(double c, const EchoConfig& echo, const DrivePulse& pulse,
                                  const QuadratureSpec& quad, double tolerance) {
  quad.validate();
  if (!std::isfinite(c)) throw DomainError("deer_signal_quadrature: non-finite coupling");
  if (c == 0.0 || pulse.length_us == 0.0) return {1.0, true, 0.0};
  const double coarse = deer_average_fixed(c, echo, pulse, quad);
  const double fine = deer_average_fixed(c, echo, pulse, quad.doubled());
  const double err = std::abs(fine - coarse);
  return {fine, err <= tolerance, err};
}

DeerSignal deer_signal_montecarlo(double c, const EchoConfig& echo, const DrivePulse& pulse, std::size_t n_samples,
                                  std::uint64_t seed, std::uint64_t stream) {
  if (n_samples < 1000) throw DomainError("deer_signal_montecarlo: need at least 1000 samples");
  if (!std::isfinite(c)) throw DomainError("deer_signal_montecarlo: non-finite coupling");
  if (c == 0.0) return {1.0, true, 0.0};

  const UnitVector3d& e_B = echo.field_direction;
  const Matrix3<double> r_a = rotation_matrix(drive_axis(e_B, pulse), pulse.rotation_angle());
  const Vector3<double>& k = e_B.vector();
  Substream rng(seed, stream);

  // Welford accumulation of cos(phi).
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= n_samples; ++n) {
    const Vector3<double> e_1 = rng.unit_sphere();
    const double phi_rand = rng.uniform(0.0, constants::two_pi);
    const Vector3<double> v = r_a * e_1;
    const double cp = std::cos(phi_rand);
    const double sp = std::sin(phi_rand);
    const Vector3<double> rotated = v * cp + k.cross(v) * sp + k * (k.dot(v) * (1.0 - cp));
    const double x = std::cos(c * (rotated - e_1).dot(k));
    const double delta = x - mean;
    mean += delta / double(n);
    m2 += delta * (x - mean);
  }
  const double var = m2 / double(n_samples - 1);
  return {std::clamp(mean, -1.0, 1.0), true, std::sqrt(var / double(n_samples))};
}

double revival_detuning(const DrivePulse& pulse) {
  if (!(pulse.length_us > 0)) throw DomainError("revival_detuning: pulse length must be positive");
  const double inv = 1.0 / pulse.length_us;
  const double rest = inv * inv - pulse.rabi_MHz * pulse.rabi_MHz;
  if (rest < 0) throw DomainError("no revival detuning exists (Omega * t_p > 1)");
  return std::sqrt(rest);
}

void validate_grid(std::span<const double> grid, const char* what) {
  if (grid.empty()) throw DomainError(std::string(what) + ": grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) throw DomainError(std::string(what) + ": grid has a non-finite entry");
    if (i > 0 && grid[i] < grid[i - 1]) throw DomainError(std::string(what) + ": grid is not sorted");
  }
}

namespace {

DeerSignal evaluate(double c, const EchoConfig& echo, const DrivePulse& pulse, const SweepOptions& opts,
                    std::size_t index) {
  if (opts.estimator == Estimator::montecarlo) {
    return deer_signal_montecarlo(c, echo, pulse, opts.n_samples, opts.seed, index);
  }
  return deer_signal_quadrature(c, echo, pulse, opts.quad, opts.tolerance);
}

}  // namespace

std::vector<SweepPoint> deer_spectrum(double c, const EchoConfig& echo, double rabi_MHz, double length_us,
                                      std::span<const double> detuning_grid_MHz, const SweepOptions& opts) {
  validate_grid(detuning_grid_MHz, "deer_spectrum");
  std::vector<SweepPoint> out(detuning_grid_MHz.size());
  parallel_for(out.size(), opts.threads, [&](std::size_t i) {
    const double delta = detuning_grid_MHz[i];
    out[i] = {delta, evaluate(c, echo, DrivePulse(rabi_MHz, delta, length_us), opts, i)};
  });
  return out;
}

std::vector<SweepPoint> deer_rabi(double c, const EchoConfig& echo, double rabi_MHz, double detuning_MHz,
                                  std::span<const double> length_grid_us, const SweepOptions& opts) {
  validate_grid(length_grid_us, "deer_rabi");
  std::vector<SweepPoint> out(length_grid_us.size());
  parallel_for(out.size(), opts.threads, [&](std::size_t i) {
    const double t_p = length_grid_us[i];
    out[i] = {t_p, evaluate(c, echo, DrivePulse(rabi_MHz, detuning_MHz, t_p), opts, i)};
  });
  return out;
}

}  // namespace nvdeer
