#pragma once

// von Mises–Fisher sampling on S², used to generate multimodal test data.

#include <cmath>
#include <random>

#include "manifold_flow/numeric.hpp"

namespace manifold_flow::testing {

/// One draw from vMF(mu, kappa) on S² (mu a unit 3-vector). The cosine to the
/// mean direction has the closed-form inverse CDF w = 1 + log(ξ + (1 − ξ)e^{−2κ}) / κ.
template <typename Rng>
Vector sample_vmf_s2(const Vector& mu, double kappa, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double xi = unit(rng);
  const double w = 1.0 + std::log(xi + (1.0 - xi) * std::exp(-2.0 * kappa)) / kappa;
  const double phi = 2.0 * M_PI * unit(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));

  // Orthonormal frame {e1, e2, mu}.
  Vector helper = std::abs(mu[0]) < 0.9 ? Vector::Unit(3, 0) : Vector::Unit(3, 1);
  Vector e1 = helper - helper.dot(mu) * mu;
  e1.normalize();
  Eigen::Vector3d m3(mu[0], mu[1], mu[2]);
  Eigen::Vector3d e13(e1[0], e1[1], e1[2]);
  Eigen::Vector3d e23 = m3.cross(e13);
  Vector e2(3);
  e2 << e23[0], e23[1], e23[2];

  Vector x = w * mu + s * (std::cos(phi) * e1 + std::sin(phi) * e2);
  return x / x.norm();
}

/// Equal-weight mixture of vMF(mu) and vMF(−mu), one point per column.
template <typename Rng>
Matrix sample_antipodal_vmf_mixture(const Vector& mu, double kappa, int count, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Matrix out(3, count);
  for (int i = 0; i < count; ++i) {
    out.col(i) = sample_vmf_s2(coin(rng) ? Vector(mu) : Vector(-mu), kappa, rng);
  }
  return out;
}

}  // namespace manifold_flow::testing
