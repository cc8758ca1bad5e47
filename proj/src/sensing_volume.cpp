#include "nvdeer/sensing_volume.hpp"

#include <algorithm>
#include <cmath>

#include "nvdeer/constants.hpp"
#include "nvdeer/error.hpp"
#include "nvdeer/quadrature.hpp"

namespace nvdeer {

namespace {

constexpr double search_limit_nm = 1e6;

}  // namespace

void SampleGeometry::validate() const {
  if (!(nv_depth_nm > 0) || !std::isfinite(nv_depth_nm)) throw DomainError("SampleGeometry: depth must be positive");
  if (!(film_thickness_nm > 0)) throw DomainError("SampleGeometry: film thickness must be positive");
  if (!(spin_density_per_nm3 >= 0) || !std::isfinite(spin_density_per_nm3)) {
    throw DomainError("SampleGeometry: spin density must be finite and >= 0");
  }
}

RegionKind region_kind_from_string(const std::string& s) {
  if (s == "half_space_above_surface") return RegionKind::half_space_above_surface;
  if (s == "spherical_cap") return RegionKind::spherical_cap;
  throw DomainError("unknown region '" + s + "' (expected half_space_above_surface or spherical_cap)");
}

const char* to_string(RegionKind kind) {
  return kind == RegionKind::spherical_cap ? "spherical_cap" : "half_space_above_surface";
}

void SensingModel::validate() const {
  if (!(kappa_nm3 > 0) || !std::isfinite(kappa_nm3)) throw DomainError("SensingModel: kappa must be positive");
  if (!(threshold > 0)) throw DomainError("SensingModel: threshold must be positive");
  if (!(r_min_nm > 0)) throw DomainError("SensingModel: r_min must be positive");
  if (region == RegionKind::spherical_cap && !(cap_radius_nm > 0)) {
    throw DomainError("SensingModel: cap radius must be positive");
  }
}

double kappa_constant(double tau_us) {
  if (!(tau_us > 0) || !std::isfinite(tau_us)) throw DomainError("kappa_constant: tau must be positive");
  const double m3 = constants::mu0 * constants::gamma_e * constants::gamma_e * constants::hbar * tau_us * constants::us /
                    (8.0 * constants::pi);
  return m3 / (constants::nm * constants::nm * constants::nm);
}

double prefactor_at(double r_nm, const SensingModel& model) {
  if (!(r_nm > 0) || !std::isfinite(r_nm)) throw DomainError("prefactor_at: r must be positive");
  return model.kappa_nm3 / (r_nm * r_nm * r_nm);
}

namespace {

// n c^2 from shells r in [r_lo, r_hi] (r_hi may be infinite). With u = 1/r
// the shell integrand rho kappa^2 r^-6 * 2 pi r (min(r, top) - h) dr becomes
// 2 pi rho kappa^2 u^3 (min(1/u, top) - h) du, which is bounded at u -> 0.
double shell_integral(const SampleGeometry& geom, double kappa, double r_lo, double r_hi) {
  if (geom.spin_density_per_nm3 == 0.0 || !(r_hi > r_lo)) return 0.0;
  const double h = geom.nv_depth_nm;
  const double top = h + geom.film_thickness_nm;
  const double scale = constants::two_pi * geom.spin_density_per_nm3 * kappa * kappa;
  auto integrand = [&](double u) {
    if (u <= 0.0) return 0.0;
    const double r = 1.0 / u;
    const double height = std::min(r, top) - h;
    return height > 0.0 ? u * u * u * height : 0.0;
  };
  const double u_hi = 1.0 / r_lo;
  const double u_lo = std::isfinite(r_hi) ? 1.0 / r_hi : 0.0;
  // Split at the kink where shells start reaching through the film.
  double total = 0.0;
  if (std::isfinite(top) && 1.0 / top > u_lo && 1.0 / top < u_hi) {
    total += adaptive_simpson(integrand, u_lo, 1.0 / top, 1e-12);
    total += adaptive_simpson(integrand, 1.0 / top, u_hi, 1e-12);
  } else {
    total += adaptive_simpson(integrand, u_lo, u_hi, 1e-12);
  }
  return scale * total;
}

double film_total(const SampleGeometry& geom, const SensingModel& model) {
  return shell_integral(geom, model.kappa_nm3, std::max(geom.nv_depth_nm, model.r_min_nm),
                        std::numeric_limits<double>::infinity());
}

}  // namespace

double accumulate_nc2(const SampleGeometry& geom, const SensingModel& model) {
  geom.validate();
  model.validate();
  const double r_lo = std::max(geom.nv_depth_nm, model.r_min_nm);
  const double r_hi =
      model.region == RegionKind::spherical_cap ? model.cap_radius_nm : std::numeric_limits<double>::infinity();
  return shell_integral(geom, model.kappa_nm3, r_lo, r_hi);
}

double half_space_nc2(double rho_per_nm3, double kappa_nm3, double depth_nm) {
  return rho_per_nm3 * kappa_nm3 * kappa_nm3 * constants::pi / (6.0 * depth_nm * depth_nm * depth_nm);
}

std::optional<double> threshold_depth(double rho_per_nm3, const SensingModel& model, double film_thickness_nm) {
  model.validate();
  if (!(rho_per_nm3 > 0)) return std::nullopt;
  auto total_at = [&](double h) { return film_total({h, film_thickness_nm, rho_per_nm3}, model); };
  // n c^2 decreases monotonically with depth; bisect in log(h).
  double lo = model.r_min_nm;
  double hi = search_limit_nm;
  if (total_at(lo) < model.threshold || total_at(hi) > model.threshold) return std::nullopt;
  for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (total_at(mid) >= model.threshold) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RadiusResult detectability_radius(const SampleGeometry& geom, const SensingModel& model, double signal_fraction) {
  geom.validate();
  model.validate();
  if (!(signal_fraction > 0 && signal_fraction < 1)) {
    throw DomainError("detectability_radius: signal fraction must lie in (0, 1)");
  }
  RadiusResult out;
  out.total_nc2 = film_total(geom, model);
  out.detectable = out.total_nc2 >= model.threshold;
  if (out.total_nc2 == 0.0) return out;

  const double r_lo = std::max(geom.nv_depth_nm, model.r_min_nm);
  const double target = signal_fraction * out.total_nc2;
  auto inside = [&](double radius) { return shell_integral(geom, model.kappa_nm3, r_lo, radius); };

  double lo = r_lo;
  double hi = search_limit_nm;
  if (inside(hi) < target) {
    out.open = true;
    return out;
  }
  while (hi - lo > 1.0) {
    const double mid = 0.5 * (lo + hi);
    if (inside(mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  out.radius_nm = 0.5 * (lo + hi);
  return out;
}

double density_estimate(double amount_mol, double volume_mm3) {
  if (!(amount_mol > 0) || !(volume_mm3 > 0)) throw DomainError("density_estimate: amount and volume must be positive");
  constexpr double nm3_per_mm3 = 1e18;
  return amount_mol * constants::avogadro / (volume_mm3 * nm3_per_mm3);
}

}  // namespace nvdeer
