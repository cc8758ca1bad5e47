#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "nvdeer/error.hpp"

namespace nvdeer {

template <typename Real>
using HermitianMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

using HermitianMatrixXcd = HermitianMatrix<double>;

template <typename Real>
struct EigenDecomposition {
  Eigen::Matrix<Real, Eigen::Dynamic, 1> eigenvalues;  // ascending
  HermitianMatrix<Real> eigenvectors;                  // columns
  int sweeps{0};
};

// Relative deviation ||H - H^dagger||_F / ||H||_F (0 for the zero matrix).
template <typename Real>
Real hermiticity_defect(const HermitianMatrix<Real>& h) {
  const Real norm = h.norm();
  if (norm == Real(0)) return Real(0);
  return (h - h.adjoint()).norm() / norm;
}

// Cyclic Jacobi diagonalization of a complex Hermitian matrix. Each
// rotation first removes the phase of H(p,q), then applies a real Givens
// rotation. Iterates until the off-diagonal Frobenius norm falls below
// tol * ||H||_F.
template <typename Real>
EigenDecomposition<Real> eigen_solve(const HermitianMatrix<Real>& input, Real tol = Real(1e-12), int max_sweeps = 100) {
  using Complex = std::complex<Real>;
  using std::abs;
  using std::sqrt;

  if (input.rows() != input.cols()) throw DomainError("eigen_solve: matrix is not square");
  if (!input.allFinite()) throw DomainError("eigen_solve: non-finite entry");
  if (hermiticity_defect(input) > Real(1e-10)) throw DomainError("eigen_solve: matrix is not Hermitian");

  const Eigen::Index n = input.rows();
  HermitianMatrix<Real> h = Real(0.5) * (input + input.adjoint());
  HermitianMatrix<Real> v = HermitianMatrix<Real>::Identity(n, n);
  const Real scale = h.norm();

  auto off_norm = [&] {
    Real s = 0;
    for (Eigen::Index q = 0; q < n; ++q)
      for (Eigen::Index p = 0; p < n; ++p)
        if (p != q) s += std::norm(h(p, q));
    return sqrt(s);
  };

  EigenDecomposition<Real> out;
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    if (scale == Real(0) || off_norm() <= tol * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Complex hpq = h(p, q);
        const Real mag = abs(hpq);
        if (mag == Real(0)) continue;
        const Complex phase = hpq / mag;  // e^{i phi}
        const Real theta = (h(q, q).real() - h(p, p).real()) / (Real(2) * mag);
        const Real t = (theta >= 0 ? Real(1) : Real(-1)) / (abs(theta) + sqrt(theta * theta + Real(1)));
        const Real c = Real(1) / sqrt(t * t + Real(1));
        const Real s = t * c;

        // U = diag(1, e^{-i phi}) * [[c, s], [-s, c]] acting on (p, q).
        const Complex u_qp = -s * std::conj(phase);
        const Complex u_qq = c * std::conj(phase);
        for (Eigen::Index k = 0; k < n; ++k) {
          const Complex hp = h(k, p);
          const Complex hq = h(k, q);
          h(k, p) = c * hp + u_qp * hq;
          h(k, q) = s * hp + u_qq * hq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Complex hp = h(p, k);
          const Complex hq = h(q, k);
          h(p, k) = c * hp + std::conj(u_qp) * hq;
          h(q, k) = s * hp + std::conj(u_qq) * hq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Complex vp = v(k, p);
          const Complex vq = v(k, q);
          v(k, p) = c * vp + u_qp * vq;
          v(k, q) = s * vp + u_qq * vq;
        }
        h(p, q) = Complex(0);
        h(q, p) = Complex(0);
        h(p, p) = Complex(h(p, p).real(), 0);
        h(q, q) = Complex(h(q, q).real(), 0);
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return h(a, a).real() < h(b, b).real(); });
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = h(order[i], order[i]).real();
    out.eigenvectors.col(i) = v.col(order[i]);
  }
  return out;
}

}  // namespace nvdeer
