#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "nvdeer/constants.hpp"
#include "nvdeer/error.hpp"

namespace nvdeer {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.array().isFinite().all();
}

}  // namespace detail

// A direction in R^3. The norm is fixed to one at construction; the raw
// components are never exposed for mutation.
template <typename Scalar>
class UnitVector3 {
public:
  UnitVector3() : v_(Vector3<Scalar>::UnitZ()) {}

  template <typename Derived>
  explicit UnitVector3(const Eigen::MatrixBase<Derived>& v) {
    if (!detail::all_finite(v)) throw DomainError("UnitVector3: non-finite component");
    // stableNorm avoids overflow/underflow for extreme component magnitudes.
    const Scalar n = v.stableNorm();
    if (!(n > Scalar(0))) throw DomainError("UnitVector3: zero-length vector");
    v_ = v / n;
  }

  UnitVector3(Scalar x, Scalar y, Scalar z) : UnitVector3(Vector3<Scalar>(x, y, z)) {}

  static UnitVector3 unit_x() { return UnitVector3(Vector3<Scalar>::UnitX()); }
  static UnitVector3 unit_y() { return UnitVector3(Vector3<Scalar>::UnitY()); }
  static UnitVector3 unit_z() { return UnitVector3(Vector3<Scalar>::UnitZ()); }

  const Vector3<Scalar>& vector() const { return v_; }
  operator const Vector3<Scalar>&() const { return v_; }

  Scalar x() const { return v_.x(); }
  Scalar y() const { return v_.y(); }
  Scalar z() const { return v_.z(); }

  Scalar dot(const UnitVector3& other) const { return v_.dot(other.v_); }

  template <typename Derived>
  Scalar dot(const Eigen::MatrixBase<Derived>& other) const {
    return v_.dot(other);
  }

  // A fixed unit vector perpendicular to this one.
  UnitVector3 any_perpendicular() const {
    // Cross with the coordinate axis least aligned with v.
    Vector3<Scalar> a = v_.cwiseAbs();
    Vector3<Scalar> axis = Vector3<Scalar>::Zero();
    if (a.x() <= a.y() && a.x() <= a.z()) {
      axis.x() = 1;
    } else if (a.y() <= a.z()) {
      axis.y() = 1;
    } else {
      axis.z() = 1;
    }
    return UnitVector3(v_.cross(axis));
  }

private:
  Vector3<Scalar> v_;
};

using UnitVector3d = UnitVector3<double>;

// Polar angle theta in [0, pi], azimuth phi in [0, 2 pi).
template <typename Scalar>
struct SphericalDirection {
  Scalar theta{0};
  Scalar phi{0};

  SphericalDirection() = default;
  SphericalDirection(Scalar theta_, Scalar phi_) : theta(theta_), phi(phi_) {
    using std::isfinite;
    if (!isfinite(theta) || !isfinite(phi)) {
      throw DomainError("SphericalDirection: non-finite angle");
    }
    if (theta < Scalar(0) || theta > Scalar(constants::pi)) {
      throw DomainError("SphericalDirection: theta outside [0, pi]");
    }
    phi = std::fmod(phi, Scalar(constants::two_pi));
    if (phi < Scalar(0)) phi += Scalar(constants::two_pi);
  }

  UnitVector3<Scalar> unit_vector() const {
    using std::cos;
    using std::sin;
    return UnitVector3<Scalar>(sin(theta) * cos(phi), sin(theta) * sin(phi), cos(theta));
  }
};

// Right-handed Rodrigues rotation of v about axis by angle (radians):
//   v cos a + (k x v) sin a + k (k . v)(1 - cos a)
template <typename Scalar>
UnitVector3<Scalar> rotate_axis_angle(const UnitVector3<Scalar>& v, const UnitVector3<Scalar>& axis,
                                      Scalar angle) {
  using std::cos;
  using std::isfinite;
  using std::sin;
  if (!isfinite(angle)) throw DomainError("rotate_axis_angle: non-finite angle");
  const Vector3<Scalar>& k = axis.vector();
  const Vector3<Scalar>& x = v.vector();
  const Scalar c = cos(angle);
  const Scalar s = sin(angle);
  Vector3<Scalar> r = x * c + k.cross(x) * s + k * (k.dot(x) * (Scalar(1) - c));
  return UnitVector3<Scalar>(r);
}

// Matrix form of rotate_axis_angle; R * v equals rotate_axis_angle(v, axis, angle).
template <typename Scalar>
Matrix3<Scalar> rotation_matrix(const UnitVector3<Scalar>& axis, Scalar angle) {
  using std::cos;
  using std::sin;
  const Vector3<Scalar>& k = axis.vector();
  Matrix3<Scalar> K;
  K << Scalar(0), -k.z(), k.y(),
       k.z(), Scalar(0), -k.x(),
       -k.y(), k.x(), Scalar(0);
  return Matrix3<Scalar>::Identity() + sin(angle) * K + (Scalar(1) - cos(angle)) * (K * K);
}

// Dipolar field of a target electron spin on the sensor, projected on the
// NV axis (lab z): B_z = lambda_mag * (e_1 . e_i).
template <typename Scalar>
struct DipolarCoupling {
  Scalar lambda_mag{0};  // tesla
  UnitVector3<Scalar> e_i;
  Scalar r{0};           // nm
  Scalar theta_r{0};     // rad
};

template <typename Scalar>
DipolarCoupling<Scalar> dipolar_coupling(Scalar r_nm, const SphericalDirection<Scalar>& direction) {
  using std::cos;
  using std::isfinite;
  using std::sqrt;
  if (!isfinite(r_nm) || !(r_nm > Scalar(0))) {
    throw DomainError("dipolar_coupling: separation must be positive, got " + std::to_string(double(r_nm)));
  }
  const Scalar r = r_nm * Scalar(constants::nm);
  const Scalar cos_t = cos(direction.theta);
  const Scalar angular = sqrt(Scalar(3) * cos_t * cos_t + Scalar(1));
  const Scalar scale = Scalar(constants::mu0) * Scalar(constants::gamma_e) * Scalar(constants::hbar) /
                       (Scalar(8) * Scalar(constants::pi) * r * r * r);

  const Vector3<Scalar> e_r = direction.unit_vector().vector();
  const Vector3<Scalar> e_z = Vector3<Scalar>::UnitZ();
  const Vector3<Scalar> bracket = Scalar(3) * e_r.dot(e_z) * e_r - e_z;

  DipolarCoupling<Scalar> out;
  out.lambda_mag = scale * angular;
  out.e_i = UnitVector3<Scalar>(bracket / angular);
  out.r = r_nm;
  out.theta_r = direction.theta;
  return out;
}

// Dimensionless sensor phase scale c = gamma_e * tau * lambda * (e_B . e_i).
template <typename Scalar>
Scalar coupling_prefactor(const DipolarCoupling<Scalar>& coupling, Scalar tau_us, const UnitVector3<Scalar>& e_B) {
  if (!(tau_us > Scalar(0))) throw DomainError("coupling_prefactor: tau must be positive");
  return Scalar(constants::gamma_e) * tau_us * Scalar(constants::us) * coupling.lambda_mag * e_B.dot(coupling.e_i);
}

}  // namespace nvdeer
