#include "nvdeer/deer_ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "nvdeer/random.hpp"

namespace nvdeer {

EnsembleCoupling::EnsembleCoupling(double value) : n_c2(value) {
  if (!(value >= 0) || !std::isfinite(value)) throw DomainError("EnsembleCoupling: n_c2 must be finite and >= 0");
}

SpinBathSample SpinBathSample::uniform(std::size_t n_spins, double n_c2) {
  if (!(n_c2 >= 0) || !std::isfinite(n_c2)) throw DomainError("SpinBathSample: n_c2 must be finite and >= 0");
  if (n_spins == 0) {
    if (n_c2 > 0) throw DomainError("SpinBathSample: cannot spread a nonzero n_c2 over zero spins");
    return {};
  }
  return {std::vector<double>(n_spins, std::sqrt(n_c2 / double(n_spins)))};
}

double SpinBathSample::n_c2() const {
  double s = 0.0;
  for (double c : couplings) s += c * c;
  return s;
}

double ensemble_variance(const EnsembleCoupling& coupling, const DrivePulse& pulse) {
  const double w2 = pulse.rabi_MHz * pulse.rabi_MHz + pulse.detuning_MHz * pulse.detuning_MHz;
  if (w2 == 0.0) return 0.0;
  const double s = std::sin(0.5 * pulse.rotation_angle());
  return coupling.n_c2 * 4.0 * pulse.rabi_MHz * pulse.rabi_MHz / (3.0 * w2) * s * s;
}

DeerSignal ensemble_signal(const EnsembleCoupling& coupling, const DrivePulse& pulse) {
  return {std::exp(-0.5 * ensemble_variance(coupling, pulse)), true, 0.0};
}

double ensemble_dip_depth(const EnsembleCoupling& coupling, const DrivePulse& pulse) {
  return 1.0 - ensemble_signal(coupling, pulse).value;
}

DeerSignal ensemble_signal_montecarlo(const SpinBathSample& bath, const EchoConfig& echo, const DrivePulse& pulse,
                                      std::size_t n_samples, std::uint64_t seed, std::uint64_t stream) {
  if (n_samples < 1000) throw DomainError("ensemble_signal_montecarlo: need at least 1000 samples");
  for (double c : bath.couplings) {
    if (!std::isfinite(c)) throw DomainError("ensemble_signal_montecarlo: non-finite coupling");
  }
  if (bath.couplings.empty()) return {1.0, true, 0.0};

  const UnitVector3d& e_B = echo.field_direction;
  const Matrix3<double> r_a = rotation_matrix(drive_axis(e_B, pulse), pulse.rotation_angle());
  Substream rng(seed, stream);

  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= n_samples; ++n) {
    const double phi_rand = rng.uniform(0.0, constants::two_pi);
    // (R e - e) . e_B = e . w with w = R^T e_B - e_B, shared by every spin of the shot.
    const Matrix3<double> r = rotation_matrix(e_B, phi_rand) * r_a;
    const Vector3<double> w = r.transpose() * e_B.vector() - e_B.vector();
    double phi = 0.0;
    for (double c : bath.couplings) phi += c * w.dot(rng.unit_sphere());
    const double x = std::cos(phi);
    const double delta = x - mean;
    mean += delta / double(n);
    m2 += delta * (x - mean);
  }
  const double var = m2 / double(n_samples - 1);
  return {std::clamp(mean, -1.0, 1.0), true, std::sqrt(var / double(n_samples))};
}

}  // namespace nvdeer
