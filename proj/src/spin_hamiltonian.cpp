#include "nvdeer/spin_hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/KroneckerProduct>

#include "nvdeer/constants.hpp"
#include "nvdeer/error.hpp"

namespace nvdeer {

namespace {

int twice_spin(double spin) {
  const double two_s = 2.0 * spin;
  if (!std::isfinite(spin) || spin < 0 || std::abs(two_s - std::round(two_s)) > 1e-12) {
    throw DomainError("spin quantum number must be a non-negative half-integer, got " + std::to_string(spin));
  }
  return int(std::lround(two_s));
}

}  // namespace

SpinOperators spin_operators(double spin) {
  const int d = twice_spin(spin) + 1;
  using C = std::complex<double>;
  HermitianMatrixXcd plus = HermitianMatrixXcd::Zero(d, d);
  HermitianMatrixXcd z = HermitianMatrixXcd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const double m = spin - i;
    z(i, i) = m;
    // S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>; |m+1> is row i-1.
    if (i > 0) plus(i - 1, i) = std::sqrt(spin * (spin + 1) - m * (m + 1));
  }
  const HermitianMatrixXcd minus = plus.adjoint();
  return {(plus + minus) * 0.5, (plus - minus) * C(0, -0.5), z};
}

std::size_t SpinSystem::dimension() const {
  return std::size_t(twice_spin(S) + 1) * std::size_t(twice_spin(I) + 1);
}

void SpinSystem::validate() const {
  if (dimension() > 16) throw DomainError("SpinSystem '" + name + "': Hilbert space dimension exceeds 16");
  if (!g.allFinite() || !A_MHz.allFinite() || !std::isfinite(g_n) || !std::isfinite(P_z_MHz)) {
    throw DomainError("SpinSystem '" + name + "': non-finite parameter");
  }
}

SpinSystem cu2_preset() {
  SpinSystem s;
  s.name = "Cu2+";
  s.S = 0.5;
  s.I = 1.5;
  s.g = {-2.0835, -2.0835, -2.415};
  s.A_MHz = {30, 30, 339};
  return s;
}

SpinSystem p1_preset() {
  SpinSystem s;
  s.name = "P1";
  s.S = 0.5;
  s.I = 1.0;
  s.g = {-2.0024, -2.0024, -2.0025};
  s.A_MHz = {82, 82, 114};
  s.g_n = 0.403;
  s.P_z_MHz = -5.6;
  return s;
}

SpinSystem free_electron_preset() {
  SpinSystem s;
  s.name = "free-electron";
  s.S = 0.5;
  s.I = 0.0;
  s.g = {2.0023, 2.0023, 2.0023};
  return s;
}

SpinSystem preset(const std::string& name) {
  if (name == "Cu2+") return cu2_preset();
  if (name == "P1") return p1_preset();
  if (name == "free-electron") return free_electron_preset();
  throw DomainError("unknown spin-system preset '" + name + "'");
}

FieldConfig::FieldConfig(double b, double theta_, double phi_) : B_G(b), theta(theta_), phi(phi_) {
  if (!std::isfinite(b) || !std::isfinite(theta_) || !std::isfinite(phi_)) {
    throw DomainError("FieldConfig: non-finite value");
  }
  if (b < 0) throw DomainError("FieldConfig: field magnitude must be >= 0");
}

FieldConfig FieldConfig::from_cartesian(const Eigen::Vector3d& b_G) {
  if (!b_G.allFinite()) throw DomainError("FieldConfig: non-finite value");
  const double b = b_G.norm();
  if (b == 0.0) return FieldConfig(0.0, 0.0, 0.0);
  return FieldConfig(b, std::acos(std::clamp(b_G.z() / b, -1.0, 1.0)), std::atan2(b_G.y(), b_G.x()));
}

Eigen::Vector3d FieldConfig::cartesian() const {
  return B_G * Eigen::Vector3d(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
}

Eigen::Vector3d FieldConfig::drive_direction() const {
  return {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta)};
}

HermitianMatrixXcd build_hamiltonian(const SpinSystem& sys, const FieldConfig& field) {
  sys.validate();
  const SpinOperators s = spin_operators(sys.S);
  const SpinOperators n = spin_operators(sys.I);
  const Eigen::Index de = s.z.rows();
  const Eigen::Index dn = n.z.rows();
  const HermitianMatrixXcd one_e = HermitianMatrixXcd::Identity(de, de);
  const HermitianMatrixXcd one_n = HermitianMatrixXcd::Identity(dn, dn);

  const Eigen::Vector3d b = field.cartesian();
  const HermitianMatrixXcd* se[3] = {&s.x, &s.y, &s.z};
  const HermitianMatrixXcd* in[3] = {&n.x, &n.y, &n.z};

  HermitianMatrixXcd h = HermitianMatrixXcd::Zero(de * dn, de * dn);
  for (int a = 0; a < 3; ++a) {
    h += (constants::mu_B_MHz_per_G * b(a) * sys.g(a)) * HermitianMatrixXcd(Eigen::kroneckerProduct(*se[a], one_n));
    h += sys.A_MHz(a) * HermitianMatrixXcd(Eigen::kroneckerProduct(*se[a], *in[a]));
    if (sys.g_n != 0.0) {
      h -= (sys.g_n * constants::mu_n_MHz_per_G * b(a)) * HermitianMatrixXcd(Eigen::kroneckerProduct(one_e, *in[a]));
    }
  }
  if (sys.P_z_MHz != 0.0) {
    h -= sys.P_z_MHz * HermitianMatrixXcd(Eigen::kroneckerProduct(one_e, HermitianMatrixXcd(n.z * n.z)));
  }
  return h;
}

std::vector<TransitionLine> SpectrumResult::strongest(std::size_t k) const {
  std::vector<TransitionLine> sorted = lines;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TransitionLine& a, const TransitionLine& b) { return a.intensity > b.intensity; });
  if (sorted.size() > k) sorted.resize(k);
  std::sort(sorted.begin(), sorted.end(),
            [](const TransitionLine& a, const TransitionLine& b) { return a.frequency_MHz < b.frequency_MHz; });
  return sorted;
}

SpectrumResult transition_spectrum(const SpinSystem& sys, const FieldConfig& field, const SpectrumOptions& opts) {
  const HermitianMatrixXcd h = build_hamiltonian(sys, field);
  const EigenDecomposition<double> eig = eigen_solve(h);

  const SpinOperators s = spin_operators(sys.S);
  const Eigen::Vector3d p = field.drive_direction();
  const Eigen::Index dn = Eigen::Index(sys.dimension()) / s.z.rows();
  const HermitianMatrixXcd drive_e = p.x() * s.x + p.y() * s.y + p.z() * s.z;
  const HermitianMatrixXcd drive =
      Eigen::kroneckerProduct(drive_e, HermitianMatrixXcd::Identity(dn, dn)).eval();
  const HermitianMatrixXcd m = eig.eigenvectors.adjoint() * drive * eig.eigenvectors;

  std::vector<TransitionLine> raw;
  const Eigen::Index d = h.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      raw.push_back({eig.eigenvalues(j) - eig.eigenvalues(i), std::norm(m(j, i))});
    }
  }
  std::sort(raw.begin(), raw.end(),
            [](const TransitionLine& a, const TransitionLine& b) { return a.frequency_MHz < b.frequency_MHz; });

  // Merge clusters of near-degenerate lines (intensity-weighted centre).
  std::vector<TransitionLine> merged;
  for (std::size_t i = 0; i < raw.size();) {
    const double start = raw[i].frequency_MHz;
    double weight = 0.0;
    double moment = 0.0;
    double plain = 0.0;
    std::size_t j = i;
    for (; j < raw.size() && raw[j].frequency_MHz - start <= opts.merge_tol_MHz; ++j) {
      weight += raw[j].intensity;
      moment += raw[j].intensity * raw[j].frequency_MHz;
      plain += raw[j].frequency_MHz;
    }
    const double f = weight > 0 ? moment / weight : plain / double(j - i);
    merged.push_back({f, weight});
    i = j;
  }

  double max_intensity = 0.0;
  for (const auto& line : merged) max_intensity = std::max(max_intensity, line.intensity);
  SpectrumResult out;
  if (max_intensity <= 0.0) return out;
  for (const auto& line : merged) {
    const double rel = line.intensity / max_intensity;
    if (rel >= opts.intensity_floor && rel > 0.0) out.lines.push_back({std::max(0.0, line.frequency_MHz), rel});
  }
  return out;
}

std::vector<double> broaden(const SpectrumResult& spectrum, const std::vector<double>& grid_MHz, double fwhm_MHz) {
  if (!(fwhm_MHz > 0)) throw DomainError("broaden: FWHM must be positive");
  const double sigma = fwhm_MHz / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  std::vector<double> out(grid_MHz.size(), 0.0);
  for (std::size_t i = 0; i < grid_MHz.size(); ++i) {
    for (const auto& line : spectrum.lines) {
      const double x = (grid_MHz[i] - line.frequency_MHz) / sigma;
      out[i] += line.intensity * std::exp(-0.5 * x * x);
    }
  }
  return out;
}

}  // namespace nvdeer
