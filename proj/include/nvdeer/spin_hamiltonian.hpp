#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvdeer/hermitian_eigen.hpp"

namespace nvdeer {

struct SpinOperators {
  HermitianMatrixXcd x, y, z;
};

// Sx, Sy, Sz in the |m> basis ordered m = S, S-1, ..., -S. 2S must be a
// non-negative integer.
SpinOperators spin_operators(double spin);

// Electron spin S coupled to one nucleus I. Tensors are diagonal in a
// shared principal-axis frame. Terms with g_n == 0 or P_z == 0 are absent.
struct SpinSystem {
  std::string name;
  double S{0.5};
  double I{0.0};
  Eigen::Vector3d g{2.0023, 2.0023, 2.0023};
  Eigen::Vector3d A_MHz{0, 0, 0};
  double g_n{0.0};
  double P_z_MHz{0.0};

  std::size_t dimension() const;
  void validate() const;
};

SpinSystem cu2_preset();
SpinSystem p1_preset();
SpinSystem free_electron_preset();
// "Cu2+", "P1" or "free-electron"; throws DomainError otherwise.
SpinSystem preset(const std::string& name);

// Static field in the principal-axis frame.
struct FieldConfig {
  double B_G{0};
  double theta{0};  // angle to the principal z axis, rad
  double phi{0};    // azimuth, rad

  FieldConfig() = default;
  FieldConfig(double b, double theta_, double phi_ = 0.0);
  static FieldConfig from_cartesian(const Eigen::Vector3d& b_G);

  Eigen::Vector3d cartesian() const;
  // Unit vector perpendicular to B inside the B-z plane.
  Eigen::Vector3d drive_direction() const;
};

// H = mu_B B.g.S + S.A.I - g_n mu_n B.I - P_z I_z^2, in MHz, with the
// electron factor first in the tensor product.
HermitianMatrixXcd build_hamiltonian(const SpinSystem& sys, const FieldConfig& field);

struct TransitionLine {
  double frequency_MHz{0};
  double intensity{0};
};

struct SpectrumOptions {
  double intensity_floor{1e-3};  // relative to the strongest line
  double merge_tol_MHz{0.1};
};

// Lines sorted by frequency; strongest line has intensity 1.
struct SpectrumResult {
  std::vector<TransitionLine> lines;

  // The k most intense lines, sorted by frequency.
  std::vector<TransitionLine> strongest(std::size_t k) const;
};

// All level pairs i < j: frequency E_j - E_i, intensity |<j| S_perp |i>|^2
// with S_perp the electron spin along FieldConfig::drive_direction().
SpectrumResult transition_spectrum(const SpinSystem& sys, const FieldConfig& field, const SpectrumOptions& opts = {});

// Gaussian-broadened stick spectrum sampled on a frequency grid.
std::vector<double> broaden(const SpectrumResult& spectrum, const std::vector<double>& grid_MHz, double fwhm_MHz);

}  // namespace nvdeer
