#pragma once

#include <limits>
#include <optional>
#include <string>

namespace nvdeer {

// NV centre at depth h below a planar diamond surface; target spins fill a
// film of the given thickness on top of the surface with uniform density.
struct SampleGeometry {
  double nv_depth_nm{10};
  double film_thickness_nm{std::numeric_limits<double>::infinity()};
  double spin_density_per_nm3{0};

  void validate() const;
};

enum class RegionKind {
  half_space_above_surface,  // the whole film
  spherical_cap,             // film inside a sphere of cap_radius_nm centred on the NV
};

RegionKind region_kind_from_string(const std::string& s);
const char* to_string(RegionKind kind);

struct SensingModel {
  double kappa_nm3{0};
  double threshold{1.0};  // on n c^2
  RegionKind region{RegionKind::half_space_above_surface};
  double cap_radius_nm{std::numeric_limits<double>::infinity()};
  double r_min_nm{0.3};

  void validate() const;
};

// kappa = mu0 gamma_e^2 hbar tau / (8 pi), in nm^3.
double kappa_constant(double tau_us);

// c(r) = kappa / r^3; the angular factor |e_B . e_i| is taken as 1.
double prefactor_at(double r_nm, const SensingModel& model);

// n c^2 = integral over the region of rho c(r)^2 dV, by adaptive quadrature
// over spherical shells around the NV. Shells with r < r_min are excluded.
double accumulate_nc2(const SampleGeometry& geom, const SensingModel& model);

// rho kappa^2 pi / (6 h^3): infinite film, no r_min cut.
double half_space_nc2(double rho_per_nm3, double kappa_nm3, double depth_nm);

// Depth at which the whole-film n c^2 equals the model threshold; empty when
// the density is zero.
std::optional<double> threshold_depth(double rho_per_nm3, const SensingModel& model,
                                      double film_thickness_nm = std::numeric_limits<double>::infinity());

struct RadiusResult {
  double radius_nm{std::numeric_limits<double>::quiet_NaN()};
  double total_nc2{0};
  bool detectable{false};  // total_nc2 >= threshold
  bool open{false};        // no finite radius up to the search limit
};

// Radius R of the NV-centred sphere (intersected with the film) holding the
// given fraction of the whole-film n c^2; bisection to 1 nm.
RadiusResult detectability_radius(const SampleGeometry& geom, const SensingModel& model, double signal_fraction);

// rho = amount * N_A / volume, in spins per nm^3.
double density_estimate(double amount_mol, double volume_mm3);

}  // namespace nvdeer
