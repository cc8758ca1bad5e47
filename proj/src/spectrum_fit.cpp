#include "nvdeer/spectrum_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>

#include "nvdeer/constants.hpp"
#include "nvdeer/error.hpp"
#include "nvdeer/parallel.hpp"

namespace nvdeer {

LineshapeKind lineshape_kind_from_string(const std::string& s) {
  if (s == "sinc_squared") return LineshapeKind::sinc_squared;
  if (s == "lorentzian") return LineshapeKind::lorentzian;
  throw DomainError("unknown lineshape '" + s + "' (expected sinc_squared or lorentzian)");
}

const char* to_string(LineshapeKind kind) {
  return kind == LineshapeKind::sinc_squared ? "sinc_squared" : "lorentzian";
}

double sinc_squared_profile(double detuning_MHz, double rabi_MHz) {
  if (!(rabi_MHz > 0)) throw DomainError("sinc_squared_profile: Rabi frequency must be positive");
  const double x = constants::pi * std::hypot(rabi_MHz, detuning_MHz) / (2.0 * rabi_MHz);
  const double sinc = std::sin(x) / x;
  return constants::pi * constants::pi / 4.0 * sinc * sinc;
}

double LineshapeModel::shape(double frequency_MHz) const {
  const double d = frequency_MHz - center_MHz;
  if (kind == LineshapeKind::sinc_squared) return sinc_squared_profile(d, width_MHz);
  return width_MHz * width_MHz / (d * d + width_MHz * width_MHz);
}

double LineshapeModel::fwhm_MHz() const {
  if (kind == LineshapeKind::lorentzian) return 2.0 * width_MHz;
  // P decreases monotonically from 1 to 0 on [0, sqrt(3) Omega]; Illinois
  // false position on P - 1/2.
  double a = 0.0;
  double b = std::sqrt(3.0) * width_MHz;
  double fa = 0.5;
  double fb = -0.5;
  int side = 0;
  for (int i = 0; i < 200; ++i) {
    const double c = (a * fb - b * fa) / (fb - fa);
    const double fc = sinc_squared_profile(c, width_MHz) - 0.5;
    if (fc == 0.0 || std::abs(b - a) < 1e-15 * width_MHz) return 2.0 * c;
    if (fc * fb > 0) {
      b = c;
      fb = fc;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = c;
      fa = fc;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
  }
  return a + b;
}

namespace {

struct LinearSolution {
  double amplitude;
  double baseline;
  double chi2;
};

// Best (amplitude >= 0, baseline) for fixed shape values.
LinearSolution solve_linear(std::span<const DataPoint> data, const LineshapeModel& m) {
  double sw = 0, ss = 0, sss = 0, sy = 0, ssy = 0;
  for (const auto& p : data) {
    const double w = 1.0 / (p.error * p.error);
    const double s = m.shape(p.frequency_MHz);
    sw += w;
    ss += w * s;
    sss += w * s * s;
    sy += w * p.signal;
    ssy += w * s * p.signal;
  }
  // y = b - a s  =>  normal equations in (b, a).
  const double det = sw * sss - ss * ss;
  double a = 0.0;
  double b = sy / sw;
  if (det > 1e-14 * sw * sss) {
    b = (sy * sss - ss * ssy) / det;
    a = (sy * ss - sw * ssy) / det;
    if (a < 0) {
      a = 0.0;
      b = sy / sw;
    }
  }
  double chi2 = 0.0;
  for (const auto& p : data) {
    const double r = (p.signal - (b - a * m.shape(p.frequency_MHz))) / p.error;
    chi2 += r * r;
  }
  return {a, b, chi2};
}

}  // namespace

LineshapeFit fit_lineshape(std::span<const DataPoint> data, LineshapeKind kind, int max_iterations) {
  if (data.size() < 5) throw DomainError("fit_lineshape: need at least 5 points");
  for (const auto& p : data) {
    if (!(p.error > 0) || !std::isfinite(p.error) || !std::isfinite(p.signal) || !std::isfinite(p.frequency_MHz)) {
      throw DomainError("fit_lineshape: every point needs finite values and a positive error");
    }
  }

  double f_lo = data[0].frequency_MHz;
  double f_hi = f_lo;
  for (const auto& p : data) {
    f_lo = std::min(f_lo, p.frequency_MHz);
    f_hi = std::max(f_hi, p.frequency_MHz);
  }
  const double span = std::max(f_hi - f_lo, 1e-9);
  const double step = span / double(data.size() - 1);

  LineshapeModel model;
  model.kind = kind;
  auto objective = [&](double center, double log_width) {
    model.center_MHz = center;
    model.width_MHz = std::exp(log_width);
    return solve_linear(data, model).chi2;
  };

  // Coarse seed.
  const int n_center = 81;
  const int n_width = 40;
  const double lw_lo = std::log(step / 4.0);
  const double lw_hi = std::log(span);
  std::array<double, 2> best{f_lo, lw_lo};
  double best_chi2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_center; ++i) {
    const double c = f_lo + span * i / (n_center - 1);
    for (int j = 0; j < n_width; ++j) {
      const double lw = lw_lo + (lw_hi - lw_lo) * j / (n_width - 1);
      const double v = objective(c, lw);
      if (v < best_chi2) {
        best_chi2 = v;
        best = {c, lw};
      }
    }
  }

  // Nelder-Mead on (center, log width).
  using Point = std::array<double, 2>;
  std::array<Point, 3> simplex = {best, Point{best[0] + span / (n_center - 1), best[1]},
                                  Point{best[0], best[1] + (lw_hi - lw_lo) / (n_width - 1)}};
  std::array<double, 3> values{};
  for (int i = 0; i < 3; ++i) values[i] = objective(simplex[i][0], simplex[i][1]);

  LineshapeFit fit;
  for (fit.iterations = 0; fit.iterations < max_iterations; ++fit.iterations) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] < values[b]; });
    const Point lo = simplex[idx[0]], mid = simplex[idx[1]], hi = simplex[idx[2]];
    const double f_best = values[idx[0]], f_mid = values[idx[1]], f_worst = values[idx[2]];

    const double x_size = std::max({std::abs(mid[0] - lo[0]), std::abs(hi[0] - lo[0])}) / span +
                          std::max({std::abs(mid[1] - lo[1]), std::abs(hi[1] - lo[1])});
    if (f_worst - f_best <= 1e-6 * std::abs(f_best) + 1e-300 || x_size < 1e-13) {
      fit.converged = true;
      break;
    }

    const Point centroid{0.5 * (lo[0] + mid[0]), 0.5 * (lo[1] + mid[1])};
    auto along = [&](double t) { return Point{centroid[0] + t * (hi[0] - centroid[0]), centroid[1] + t * (hi[1] - centroid[1])}; };
    const Point xr = along(-1.0);
    const double fr = objective(xr[0], xr[1]);
    if (fr < f_best) {
      const Point xe = along(-2.0);
      const double fe = objective(xe[0], xe[1]);
      if (fe < fr) {
        simplex[idx[2]] = xe;
        values[idx[2]] = fe;
      } else {
        simplex[idx[2]] = xr;
        values[idx[2]] = fr;
      }
    } else if (fr < f_mid) {
      simplex[idx[2]] = xr;
      values[idx[2]] = fr;
    } else {
      const Point xc = fr < f_worst ? along(-0.5) : along(0.5);
      const double fc = objective(xc[0], xc[1]);
      if (fc < std::min(fr, f_worst)) {
        simplex[idx[2]] = xc;
        values[idx[2]] = fc;
      } else {
        for (int k : {idx[1], idx[2]}) {
          simplex[k] = {lo[0] + 0.5 * (simplex[k][0] - lo[0]), lo[1] + 0.5 * (simplex[k][1] - lo[1])};
          values[k] = objective(simplex[k][0], simplex[k][1]);
        }
      }
    }
  }

  const int best_i = int(std::min_element(values.begin(), values.end()) - values.begin());
  model.center_MHz = simplex[best_i][0];
  model.width_MHz = std::exp(simplex[best_i][1]);
  const LinearSolution lin = solve_linear(data, model);
  model.amplitude = lin.amplitude;
  model.baseline = lin.baseline;
  fit.model = model;
  fit.chi2 = lin.chi2;
  fit.reduced_chi2 = lin.chi2 / double(data.size() - 4);
  fit.degenerate = lin.amplitude <= 1e-8 * (std::abs(lin.baseline) + 1e-300);
  return fit;
}

// ---------------------------------------------------------------------------

void validate_peaks(const ObservedPeaks& peaks) {
  if (peaks.empty()) throw DomainError("observed peaks: need at least one entry");
  for (const auto& p : peaks) {
    if (!std::isfinite(p.frequency_MHz)) throw DomainError("observed peaks: non-finite frequency");
    if (!(p.uncertainty_MHz > 0) || !std::isfinite(p.uncertainty_MHz)) {
      throw DomainError("observed peaks: uncertainties must be positive");
    }
  }
}

LinePool line_pool_from_string(const std::string& s) {
  if (s == "all") return LinePool::all_above_floor;
  if (s == "strongest") return LinePool::strongest;
  throw DomainError("unknown line pool '" + s + "' (expected all or strongest)");
}

const char* to_string(LinePool pool) { return pool == LinePool::strongest ? "strongest" : "all"; }

double match_chi2(const ObservedPeaks& peaks_in, std::span<const TransitionLine> candidates) {
  if (candidates.size() < peaks_in.size()) return infeasible_chi2;
  // Sorting makes the result independent of the order peaks are listed in.
  ObservedPeaks peaks = peaks_in;
  std::sort(peaks.begin(), peaks.end(), [](const ObservedPeak& a, const ObservedPeak& b) {
    return a.frequency_MHz < b.frequency_MHz || (a.frequency_MHz == b.frequency_MHz && a.uncertainty_MHz < b.uncertainty_MHz);
  });

  struct Pair {
    double distance;
    std::size_t peak;
    std::size_t line;
  };
  std::vector<Pair> pairs;
  pairs.reserve(peaks.size() * candidates.size());
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      pairs.push_back({std::abs(candidates[j].frequency_MHz - peaks[i].frequency_MHz), i, j});
    }
  }
  // Ties resolve in sorted (peak, line) order.
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.distance < b.distance; });

  std::vector<bool> peak_used(peaks.size(), false);
  std::vector<bool> line_used(candidates.size(), false);
  std::size_t matched = 0;
  double chi2 = 0.0;
  for (const auto& p : pairs) {
    if (peak_used[p.peak] || line_used[p.line]) continue;
    peak_used[p.peak] = true;
    line_used[p.line] = true;
    const double r = p.distance / peaks[p.peak].uncertainty_MHz;
    chi2 += r * r;
    if (++matched == peaks.size()) break;
  }
  return chi2;
}

double chi2_at(const SpinSystem& sys, const ObservedPeaks& peaks, const FieldConfig& field, const Chi2Options& opts) {
  const SpectrumResult spectrum = transition_spectrum(sys, field, opts.spectrum);
  if (opts.pool == LinePool::strongest) {
    const auto top = spectrum.strongest(peaks.size());
    return match_chi2(peaks, top);
  }
  return match_chi2(peaks, spectrum.lines);
}

std::vector<FitMinimum> find_local_minima(const std::vector<double>& B_G, const std::vector<double>& theta,
                                          const Eigen::MatrixXd& chi2) {
  std::vector<FitMinimum> out;
  const Eigen::Index nb = chi2.rows();
  const Eigen::Index nt = chi2.cols();
  for (Eigen::Index i = 0; i < nb; ++i) {
    for (Eigen::Index j = 0; j < nt; ++j) {
      const double v = chi2(i, j);
      if (!std::isfinite(v)) continue;
      bool is_min = true;
      for (Eigen::Index di = -1; di <= 1 && is_min; ++di) {
        for (Eigen::Index dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const Eigen::Index a = i + di;
          const Eigen::Index b = j + dj;
          if (a < 0 || b < 0 || a >= nb || b >= nt) continue;
          if (chi2(a, b) < v) {
            is_min = false;
            break;
          }
        }
      }
      if (is_min) out.push_back({std::size_t(i), std::size_t(j), B_G[i], theta[j], v});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const FitMinimum& a, const FitMinimum& b) { return a.chi2 < b.chi2; });
  return out;
}

FitGrid chi2_surface(const SpinSystem& sys, const ObservedPeaks& peaks, const std::vector<double>& B_grid_G,
                     const std::vector<double>& theta_grid, const Chi2Options& opts) {
  validate_peaks(peaks);
  if (B_grid_G.empty() || theta_grid.empty()) throw DomainError("chi2_surface: grids must be non-empty");
  sys.validate();

  FitGrid grid;
  grid.B_G = B_grid_G;
  grid.theta = theta_grid;
  grid.chi2.resize(Eigen::Index(B_grid_G.size()), Eigen::Index(theta_grid.size()));
  const std::size_t nt = theta_grid.size();
  parallel_for(B_grid_G.size() * nt, opts.threads, [&](std::size_t k) {
    const std::size_t i = k / nt;
    const std::size_t j = k % nt;
    grid.chi2(Eigen::Index(i), Eigen::Index(j)) = chi2_at(sys, peaks, FieldConfig(B_grid_G[i], theta_grid[j], opts.phi), opts);
  });
  grid.minima = find_local_minima(grid.B_G, grid.theta, grid.chi2);
  return grid;
}

namespace {

// Walks from index `start` in direction `dir` over `values` until the level
// is exceeded; returns the interpolated crossing coordinate.
double crossing(const std::vector<double>& axis, const std::vector<double>& values, std::size_t start, int dir,
                double level, bool& open) {
  std::size_t k = start;
  while (true) {
    const long next = long(k) + dir;
    if (next < 0 || next >= long(axis.size())) {
      open = true;
      return axis[k];
    }
    const std::size_t n = std::size_t(next);
    if (values[n] > level) {
      open = false;
      if (!std::isfinite(values[n])) return axis[k];
      const double t = (level - values[k]) / (values[n] - values[k]);
      return axis[k] + t * (axis[n] - axis[k]);
    }
    k = n;
  }
}

AxisInterval axis_interval(const std::vector<double>& axis, const std::vector<double>& values, std::size_t at,
                           double level) {
  AxisInterval out;
  out.lower = crossing(axis, values, at, -1, level, out.open_lower);
  out.upper = crossing(axis, values, at, +1, level, out.open_upper);
  return out;
}

}  // namespace

UncertaintyIntervals uncertainty_intervals(const FitGrid& grid, const FitMinimum& minimum) {
  if (minimum.i_B >= grid.B_G.size() || minimum.i_theta >= grid.theta.size()) {
    throw DomainError("uncertainty_intervals: minimum index outside the grid");
  }
  const double base = grid.chi2(Eigen::Index(minimum.i_B), Eigen::Index(minimum.i_theta));
  if (!std::isfinite(base)) throw DomainError("uncertainty_intervals: minimum has no finite chi2");
  const double level = base + 1.0;

  std::vector<double> along_B(grid.B_G.size());
  for (std::size_t i = 0; i < along_B.size(); ++i) along_B[i] = grid.chi2(Eigen::Index(i), Eigen::Index(minimum.i_theta));
  std::vector<double> along_theta(grid.theta.size());
  for (std::size_t j = 0; j < along_theta.size(); ++j) along_theta[j] = grid.chi2(Eigen::Index(minimum.i_B), Eigen::Index(j));

  return {axis_interval(grid.B_G, along_B, minimum.i_B, level),
          axis_interval(grid.theta, along_theta, minimum.i_theta, level)};
}

void write_fit_grid_csv(std::ostream& os, const FitGrid& grid) {
  os << "B,theta,chi2\n";
  os << std::setprecision(10);
  for (std::size_t i = 0; i < grid.B_G.size(); ++i) {
    for (std::size_t j = 0; j < grid.theta.size(); ++j) {
      os << grid.B_G[i] << ',' << grid.theta[j] * 180.0 / constants::pi << ',';
      const double v = grid.chi2(Eigen::Index(i), Eigen::Index(j));
      if (std::isfinite(v)) {
        os << std::setprecision(12) << v << std::setprecision(10);
      } else {
        os << "inf";
      }
      os << '\n';
    }
  }
}

}  // namespace nvdeer
