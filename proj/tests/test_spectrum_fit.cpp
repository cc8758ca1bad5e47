#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "nvdeer/constants.hpp"
#include "nvdeer/quadrature.hpp"
#include "nvdeer/random.hpp"
#include "nvdeer/spectrum_fit.hpp"

using namespace nvdeer;

namespace {

constexpr double deg = constants::pi / 180.0;

std::vector<double> arange(double a, double b, double step) {
  std::vector<double> out;
  for (int i = 0; a + i * step <= b + 1e-9; ++i) out.push_back(a + i * step);
  return out;
}

std::vector<double> radians(std::vector<double> v) {
  for (double& x : v) x *= deg;
  return v;
}

double gaussian(Substream& rng) {
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(constants::two_pi * v);
}

// Half-maximum detuning by plain bisection on the raw formula.
double sinc_half_width_oracle(double rabi) {
  auto p = [&](double d) {
    const double x = constants::pi * std::sqrt(rabi * rabi + d * d) / (2 * rabi);
    const double s = std::sin(x) / x;
    return constants::pi * constants::pi / 4 * s * s - 0.5;
  };
  double lo = 0.0, hi = std::sqrt(3.0) * rabi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (p(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ObservedPeaks cu_peaks() { return {{486, 2}, {811, 2}, {1104, 2}}; }

}  // namespace

TEST_CASE("sinc-squared profile") {
  CHECK(sinc_squared_profile(0.0, 1.12) == 1.0);
  CHECK(sinc_squared_profile(0.0, 7.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(sinc_squared_profile(std::sqrt(3.0) * 2.0, 2.0)) < 1e-30);
  CHECK(sinc_squared_profile(1.0, 2.0) == doctest::Approx(sinc_squared_profile(-1.0, 2.0)));
  CHECK_THROWS_AS(sinc_squared_profile(0.0, 0.0), DomainError);

  for (double rabi : {0.5, 1.12, 3.0}) {
    LineshapeModel m{LineshapeKind::sinc_squared, 0.0, 1.0, rabi, 1.0};
    CHECK(m.fwhm_MHz() == doctest::Approx(2 * sinc_half_width_oracle(rabi)).epsilon(1e-10));
  }
  LineshapeModel lor{LineshapeKind::lorentzian, 495.0, 0.3, 1.0, 1.0};
  CHECK(lor.fwhm_MHz() == 2.0);
  CHECK(lor(495.0) == doctest::Approx(0.7));
  CHECK(lor(496.0) == doctest::Approx(0.85));
}

TEST_CASE("Lorentzian roundtrip") {
  std::vector<DataPoint> data;
  const LineshapeModel truth{LineshapeKind::lorentzian, 495.0, 0.25, 1.0, 1.0};
  for (double f : arange(485.0, 505.0, 0.2)) data.push_back({f, truth(f), 0.01});
  const auto fit = fit_lineshape(data, LineshapeKind::lorentzian);
  CHECK(fit.converged);
  CHECK_FALSE(fit.degenerate);
  CHECK(std::abs(fit.model.fwhm_MHz() - 2.0) <= 0.01);
  CHECK(fit.model.center_MHz == doctest::Approx(495.0).epsilon(1e-6));
  CHECK(fit.model.amplitude == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(fit.chi2 < 1e-6);
}

TEST_CASE("constant data is degenerate") {
  std::vector<DataPoint> data;
  for (double f : arange(0.0, 10.0, 0.5)) data.push_back({f, 0.8, 0.01});
  const auto fit = fit_lineshape(data, LineshapeKind::lorentzian);
  CHECK(fit.degenerate);
  CHECK(fit.model.amplitude < 1e-6);
  CHECK(fit.model.baseline == doctest::Approx(0.8));
}

TEST_CASE("noisy sinc-squared roundtrip") {
  Substream rng(8, 0);
  const LineshapeModel truth{LineshapeKind::sinc_squared, 501.3, 0.3, 1.12, 1.0};
  std::vector<DataPoint> data;
  for (double f : arange(495.0, 508.0, 0.1)) data.push_back({f, truth(f) * (1 + 0.01 * gaussian(rng)), 0.01});
  const auto fit = fit_lineshape(data, LineshapeKind::sinc_squared);
  CHECK(std::abs(fit.model.center_MHz - 501.3) <= 0.1);
  CHECK(fit.model.width_MHz == doctest::Approx(1.12).epsilon(0.05));
  CHECK(fit.reduced_chi2 < 2.0);
}

TEST_CASE("fit is scale equivariant") {
  const LineshapeModel truth{LineshapeKind::lorentzian, 10.0, 0.4, 0.7, 1.0};
  Substream rng(9, 0);
  std::vector<DataPoint> base, scaled;
  for (double f : arange(5.0, 15.0, 0.1)) {
    const double y = truth(f) + 0.005 * gaussian(rng);
    base.push_back({f, y, 0.005});
    scaled.push_back({f, 3.0 * y, 0.015});
  }
  const auto a = fit_lineshape(base, LineshapeKind::lorentzian);
  const auto b = fit_lineshape(scaled, LineshapeKind::lorentzian);
  CHECK(b.model.center_MHz == doctest::Approx(a.model.center_MHz).epsilon(1e-6));
  CHECK(b.model.width_MHz == doctest::Approx(a.model.width_MHz).epsilon(1e-5));
  CHECK(b.model.amplitude == doctest::Approx(3.0 * a.model.amplitude).epsilon(1e-5));
  CHECK(b.model.baseline == doctest::Approx(3.0 * a.model.baseline).epsilon(1e-6));
  CHECK(b.chi2 == doctest::Approx(a.chi2).epsilon(1e-5));
}

TEST_CASE("fit input validation") {
  std::vector<DataPoint> few = {{0, 1, 1}, {1, 1, 1}, {2, 1, 1}, {3, 1, 1}};
  CHECK_THROWS_AS(fit_lineshape(few, LineshapeKind::lorentzian), DomainError);
  few.push_back({4, 1, 0.0});
  CHECK_THROWS_AS(fit_lineshape(few, LineshapeKind::lorentzian), DomainError);
  CHECK_THROWS_AS(lineshape_kind_from_string("gaussian"), DomainError);
  CHECK(lineshape_kind_from_string(to_string(LineshapeKind::sinc_squared)) == LineshapeKind::sinc_squared);
}

TEST_CASE("match_chi2") {
  const ObservedPeaks peaks = {{100, 1}, {200, 2}};
  const std::vector<TransitionLine> lines = {{99, 1}, {150, 1}, {204, 1}};
  CHECK(match_chi2(peaks, lines) == doctest::Approx(1.0 + 4.0));
  const ObservedPeaks reversed = {{200, 2}, {100, 1}};
  CHECK(match_chi2(reversed, lines) == match_chi2(peaks, lines));
  CHECK(match_chi2(peaks, std::vector<TransitionLine>{{100, 1}}) == infeasible_chi2);
  CHECK_THROWS_AS(validate_peaks({}), DomainError);
  CHECK_THROWS_AS(validate_peaks({{100, 0}}), DomainError);
}

TEST_CASE("isotropic single peak") {
  const auto sys = free_electron_preset();
  const ObservedPeaks peak = {{560.0, 1.0}};
  const double ref = chi2_at(sys, peak, FieldConfig(200.0, 0.0));
  for (double th : {0.3, 0.9, 1.4}) CHECK(chi2_at(sys, peak, FieldConfig(200.0, th)) == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("Cu2+ chi-square surface has both minima") {
  Chi2Options opts;
  opts.threads = 4;
  const auto grid = chi2_surface(cu2_preset(), cu_peaks(), arange(150, 260, 1), radians(arange(0, 90, 1)), opts);
  const auto near = [&](double b, double th_deg) {
    return std::any_of(grid.minima.begin(), grid.minima.end(), [&](const FitMinimum& m) {
      return std::abs(m.B_G - b) <= 3.0 && std::abs(m.theta / deg - th_deg) <= 3.0;
    });
  };
  CHECK(near(192, 29));
  CHECK(near(220, 50));
  for (const auto& m : grid.minima) {
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const long i = long(m.i_B) + di, j = long(m.i_theta) + dj;
        if (i < 0 || j < 0 || i >= grid.chi2.rows() || j >= grid.chi2.cols()) continue;
        CHECK(m.chi2 <= grid.chi2(i, j));
      }
    }
  }
  CHECK((grid.chi2.array() >= 0).all());

  // Delta chi2 = 1 intervals at both minima are closed and within +-1 G / +-1 degree
  for (const auto& m : grid.minima) {
    const bool first = std::abs(m.B_G - 192) <= 3.0 && std::abs(m.theta / deg - 29) <= 3.0;
    const bool second = std::abs(m.B_G - 220) <= 3.0 && std::abs(m.theta / deg - 50) <= 3.0;
    if (!first && !second) continue;
    const auto iv = uncertainty_intervals(grid, m);
    CHECK(iv.B.lower <= m.B_G);
    CHECK(iv.B.upper >= m.B_G);
    CHECK_FALSE(iv.B.open());
    CHECK_FALSE(iv.theta.open());
    CHECK(iv.B.half_width() <= 1.0);
    CHECK(iv.theta.half_width() <= 1.0 * deg);
  }
}

TEST_CASE("forward-model roundtrip at (200 G, 40 degrees)") {
  const auto strong = transition_spectrum(cu2_preset(), FieldConfig(200.0, 40 * deg)).strongest(3);
  ObservedPeaks peaks;
  for (const auto& l : strong) peaks.push_back({l.frequency_MHz, 2.0});
  Chi2Options opts;
  opts.threads = 4;
  const auto grid = chi2_surface(cu2_preset(), peaks, arange(190, 210, 1), radians(arange(30, 50, 1)), opts);
  REQUIRE_FALSE(grid.minima.empty());
  const auto& best = grid.minima.front();
  CHECK(best.B_G == doctest::Approx(200.0));
  CHECK(best.theta == doctest::Approx(40 * deg));
  CHECK(best.chi2 < 1e-6);

  // relabeling the peaks does not change chi2
  ObservedPeaks shuffled = {peaks[2], peaks[0], peaks[1]};
  const FieldConfig f(203.0, 37 * deg);
  CHECK(chi2_at(cu2_preset(), shuffled, f) == chi2_at(cu2_preset(), peaks, f));
}

TEST_CASE("uncertainty intervals on synthetic surfaces") {
  FitGrid quad;
  quad.B_G = arange(90, 110, 0.5);
  quad.theta = {0.0, 0.1, 0.2};
  quad.chi2.resize(Eigen::Index(quad.B_G.size()), 3);
  for (std::size_t i = 0; i < quad.B_G.size(); ++i)
    for (int j = 0; j < 3; ++j) quad.chi2(Eigen::Index(i), j) = std::pow(quad.B_G[i] - 100.0, 2) + 400.0 * (j - 1) * (j - 1);
  quad.minima = find_local_minima(quad.B_G, quad.theta, quad.chi2);
  REQUIRE(quad.minima.size() == 1);
  const auto iv = uncertainty_intervals(quad, quad.minima[0]);
  CHECK(iv.B.lower == doctest::Approx(99.0).epsilon(1e-12));
  CHECK(iv.B.upper == doctest::Approx(101.0).epsilon(1e-12));
  CHECK(iv.B.half_width() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(iv.B.open());

  FitGrid flat = quad;
  flat.chi2.setConstant(3.0);
  flat.minima = find_local_minima(flat.B_G, flat.theta, flat.chi2);
  REQUIRE_FALSE(flat.minima.empty());
  const auto fiv = uncertainty_intervals(flat, flat.minima[0]);
  CHECK(fiv.B.open());
  CHECK(fiv.theta.open());
}

TEST_CASE("infeasible cells and CSV output") {
  // A four-peak request cannot be met by a one-line system.
  const ObservedPeaks four = {{100, 1}, {200, 1}, {300, 1}, {400, 1}};
  const auto grid = chi2_surface(free_electron_preset(), four, {100.0, 200.0}, {0.0, 0.5});
  CHECK(std::isinf(grid.chi2(0, 0)));
  CHECK(grid.minima.empty());
  std::ostringstream os;
  write_fit_grid_csv(os, grid);
  CHECK(os.str().rfind("B,theta,chi2\n", 0) == 0);
  CHECK(os.str().find("inf") != std::string::npos);
  CHECK_THROWS_AS(chi2_surface(cu2_preset(), cu_peaks(), {}, {0.0}), DomainError);
}
