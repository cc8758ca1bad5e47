#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace nvdeer {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(std::size_t n);

// n-point trapezoidal rule on the circle [0, 2 pi); weights sum to 2 pi.
QuadratureRule periodic_trapezoid(std::size_t n);

// Adaptive Simpson integration of f over [a, b] to the given tolerance
// (absolute + relative on the running estimate).
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-11,
                        double abs_tol = 0.0, int max_depth = 50);

}  // namespace nvdeer
