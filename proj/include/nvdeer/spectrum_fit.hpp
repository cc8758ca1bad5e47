#pragma once

#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvdeer/spin_hamiltonian.hpp"

namespace nvdeer {

// ---------------------------------------------------------------------------
// Lineshapes
// ---------------------------------------------------------------------------

enum class LineshapeKind { sinc_squared, lorentzian };

LineshapeKind lineshape_kind_from_string(const std::string& s);
const char* to_string(LineshapeKind kind);

// Transition probability of a pi pulse at detuning Delta:
//   (pi^2 / 4) sinc^2(pi sqrt(Omega^2 + Delta^2) / (2 Omega)),  sinc(x) = sin(x)/x
double sinc_squared_profile(double detuning_MHz, double rabi_MHz);

// Dip model: baseline - amplitude * shape(f - center), with shape(0) = 1.
// width is Omega for sinc_squared and the HWHM gamma for lorentzian.
struct LineshapeModel {
  LineshapeKind kind{LineshapeKind::lorentzian};
  double center_MHz{0};
  double amplitude{0};
  double width_MHz{1};
  double baseline{1};

  double shape(double frequency_MHz) const;
  double operator()(double frequency_MHz) const { return baseline - amplitude * shape(frequency_MHz); }
  double fwhm_MHz() const;
};

struct DataPoint {
  double frequency_MHz;
  double signal;
  double error;
};

struct LineshapeFit {
  LineshapeModel model;
  double chi2{0};
  double reduced_chi2{0};
  bool converged{false};
  bool degenerate{false};
  int iterations{0};
};

// Weighted least squares over (center, amplitude, width, baseline). The
// linear parameters are eliminated in closed form; (center, width) come from
// a coarse grid followed by Nelder-Mead refinement.
LineshapeFit fit_lineshape(std::span<const DataPoint> data, LineshapeKind kind, int max_iterations = 4000);

// ---------------------------------------------------------------------------
// Chi-square grid fit of (B, theta)
// ---------------------------------------------------------------------------

struct ObservedPeak {
  double frequency_MHz;
  double uncertainty_MHz;

  // Uncertainty taken as half the fitted linewidth.
  static ObservedPeak from_fwhm(double frequency_MHz, double fwhm_MHz) { return {frequency_MHz, 0.5 * fwhm_MHz}; }
};

using ObservedPeaks = std::vector<ObservedPeak>;

void validate_peaks(const ObservedPeaks& peaks);

enum class LinePool {
  all_above_floor,  // every simulated line above the intensity floor is a candidate
  strongest,        // only the K most intense lines, K = number of observed peaks
};

LinePool line_pool_from_string(const std::string& s);
const char* to_string(LinePool pool);

struct Chi2Options {
  LinePool pool{LinePool::all_above_floor};
  SpectrumOptions spectrum{};
  double phi{0.0};  // field azimuth in the principal frame, rad
  unsigned threads{1};
};

inline constexpr double infeasible_chi2 = std::numeric_limits<double>::infinity();

// Greedy nearest-frequency assignment without replacement between observed
// peaks and candidate lines; +inf when there are fewer candidates than peaks.
double match_chi2(const ObservedPeaks& peaks, std::span<const TransitionLine> candidates);

double chi2_at(const SpinSystem& sys, const ObservedPeaks& peaks, const FieldConfig& field, const Chi2Options& opts = {});

struct FitMinimum {
  std::size_t i_B{0};
  std::size_t i_theta{0};
  double B_G{0};
  double theta{0};
  double chi2{0};
};

struct FitGrid {
  std::vector<double> B_G;    // ascending
  std::vector<double> theta;  // ascending, rad
  Eigen::MatrixXd chi2;       // rows: B, cols: theta
  std::vector<FitMinimum> minima;  // ascending chi2
};

// Finite cells not exceeding any of their (up to 8) neighbours.
std::vector<FitMinimum> find_local_minima(const std::vector<double>& B_G, const std::vector<double>& theta,
                                          const Eigen::MatrixXd& chi2);

FitGrid chi2_surface(const SpinSystem& sys, const ObservedPeaks& peaks, const std::vector<double>& B_grid_G,
                     const std::vector<double>& theta_grid, const Chi2Options& opts = {});

struct AxisInterval {
  double lower{0};
  double upper{0};
  bool open_lower{false};
  bool open_upper{false};

  bool open() const { return open_lower || open_upper; }
  double half_width() const { return 0.5 * (upper - lower); }
};

struct UncertaintyIntervals {
  AxisInterval B;
  AxisInterval theta;  // rad
};

// Along each axis through the minimum, the range where chi2 <= chi2_min + 1,
// linearly interpolated between grid points. Ends that reach the grid edge
// without crossing are flagged open.
UncertaintyIntervals uncertainty_intervals(const FitGrid& grid, const FitMinimum& minimum);

// Columns B, theta, chi2 (theta in degrees), one row per cell, B-major.
void write_fit_grid_csv(std::ostream& os, const FitGrid& grid);

}  // namespace nvdeer
