#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "manifold_flow/errors.hpp"

namespace manifold_flow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus on (0, inf).
inline double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ContractViolation("softplus_inverse: argument must be positive");
  // log(e^y - 1) = y + log(1 - e^-y)
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

inline bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

/// Pairwise (cascade) summation; the reduction tree depends only on the length.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

inline double log_unit_ball_volume(int n) {
  return 0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n + 1.0);
}

/// Surface area of the unit n-sphere S^n ⊂ R^{n+1}: 2 π^{(n+1)/2} / Γ((n+1)/2).
inline double sphere_volume(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1));
}

inline double log_sphere_volume(int n) {
  return std::log(2.0) + 0.5 * (n + 1) * std::log(std::numbers::pi) - std::lgamma(0.5 * (n + 1));
}

/// Central-difference Jacobian of f: R^n -> R^m at x. Column j holds ∂f/∂x_j.
template <typename F>
Matrix central_difference_jacobian(F&& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw ContractViolation("finite-difference step must be positive");
  const Eigen::Index n = x.size();
  Vector probe = x;
  Matrix jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    probe[j] = x[j] + h;
    const Vector plus = f(probe);
    probe[j] = x[j] - h;
    const Vector minus = f(probe);
    probe[j] = x[j];
    if (j == 0) jac.resize(plus.size(), n);
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

}  // namespace manifold_flow
