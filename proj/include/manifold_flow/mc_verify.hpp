#pragma once

// Monte Carlo and quadrature checks of chart-projected densities.
//
// The central experiment: draw points uniformly on S^n, map them to R^n with
// the stereographic chart, and compare the empirical radial density of the
// chart coordinates with
//   analytic  p(r) = (1/Vol S^n) · √det G = (1/Vol S^n) · (2/(1+r²))^n
//   naive     q(r) = (1/Vol S^n) · |det Ĵ|, Ĵ the square Jacobian of the first n
//             coordinates of φ (the dimension-preserving change-of-variables mistake).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "manifold_flow/charts.hpp"
#include "manifold_flow/density.hpp"
#include "manifold_flow/errors.hpp"
#include "manifold_flow/numeric.hpp"
#include "manifold_flow/random.hpp"

namespace manifold_flow {

/// Uniform point on S^n as a normalized Gaussian vector in R^{n+1}.
template <typename Rng>
Vector draw_uniform_sphere(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector g(n + 1);
  for (;;) {
    for (int i = 0; i <= n; ++i) g[i] = normal(rng);
    const double norm = g.norm();
    if (norm >= 1e-12) return g / norm;
  }
}

/// Uniform points on S^n, one per column; deterministic for (seed, chunks).
inline Matrix sample_uniform_sphere(int n, std::uint64_t seed, std::size_t count,
                                    std::size_t chunks = kDefaultChunkCount) {
  if (n < 1) throw ContractViolation("sample_uniform_sphere: n must be >= 1");
  if (count < 1) throw ContractViolation("sample_uniform_sphere: count must be >= 1");
  if (chunks < 1) throw ContractViolation("sample_uniform_sphere: chunks must be >= 1");
  Matrix out(n + 1, static_cast<Eigen::Index>(count));
  for_each_chunk(chunks, [&](std::size_t c) {
    const ChunkRange range = chunk_range(count, chunks, c);
    Engine rng = make_engine(seed, c);
    for (std::size_t i = range.begin; i < range.end; ++i) {
      out.col(static_cast<Eigen::Index>(i)) = draw_uniform_sphere(n, rng);
    }
  });
  return out;
}

/// Uniform point on a compact chart's manifold (product of spheres); also
/// reports whether any factor landed within kPoleTolerance of its pole.
template <typename Rng>
Vector draw_uniform_manifold(const Chart& chart, Rng& rng, bool& near_pole) {
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, StereographicChart>) {
          Vector x = draw_uniform_sphere(c.intrinsic_dim(), rng);
          if (c.pole_gap(x) <= kPoleTolerance) near_pole = true;
          return x;
        } else if constexpr (std::is_same_v<T, EuclideanChart>) {
          throw ContractViolation("uniform sampling needs a compact manifold");
        } else {
          Vector x(c.ambient_dim());
          Eigen::Index offset = 0;
          for (const auto& part : c.components()) {
            const Vector piece = draw_uniform_manifold(part, rng, near_pole);
            x.segment(offset, piece.size()) = piece;
            offset += piece.size();
          }
          return x;
        }
      },
      chart.variant());
}

struct RadialProfile {
  int dim = 0;
  std::vector<double> bin_edges;
  std::vector<double> density;
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  /// Points with radius outside [edges.front(), edges.back()).
  std::size_t outside = 0;

  std::size_t bins() const { return counts.size(); }
  double center(std::size_t b) const { return 0.5 * (bin_edges[b] + bin_edges[b + 1]); }
  double width(std::size_t b) const { return bin_edges[b + 1] - bin_edges[b]; }
};

/// Exact R^n volume between radii r0 < r1.
inline double annulus_volume(int n, double r0, double r1) {
  return unit_ball_volume(n) * (std::pow(r1, n) - std::pow(r0, n));
}

inline std::vector<double> uniform_edges(double r_max, std::size_t bins) {
  if (bins < 1 || !(r_max > 0.0)) throw ContractViolation("uniform_edges: need bins >= 1 and r_max > 0");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = r_max * static_cast<double>(i) / static_cast<double>(bins);
  return edges;
}

/// Histogram of chart radii ‖u‖, normalized to probability per unit R^n volume.
inline RadialProfile radial_profile_from_radii(int n, std::span<const double> radii,
                                               std::vector<double> bin_edges) {
  if (radii.empty()) throw ContractViolation("radial_profile: no points");
  if (n < 1) throw ContractViolation("radial_profile: dimension must be >= 1");
  if (bin_edges.size() < 2) throw ContractViolation("radial_profile: need at least two bin edges");
  if (bin_edges.front() < 0.0) throw ContractViolation("radial_profile: radii start at zero or above");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) {
      throw ContractViolation("radial_profile: bin edges must be strictly increasing");
    }
  }
  RadialProfile prof;
  prof.dim = n;
  prof.bin_edges = std::move(bin_edges);
  const std::size_t bins = prof.bin_edges.size() - 1;
  prof.counts.assign(bins, 0);
  prof.total = radii.size();
  for (double r : radii) {
    if (!(r >= prof.bin_edges.front()) || !(r < prof.bin_edges.back())) {
      ++prof.outside;
      continue;
    }
    const auto it = std::upper_bound(prof.bin_edges.begin(), prof.bin_edges.end(), r);
    ++prof.counts[static_cast<std::size_t>(it - prof.bin_edges.begin()) - 1];
  }
  prof.density.resize(bins);
  const double total = static_cast<double>(prof.total);
  for (std::size_t b = 0; b < bins; ++b) {
    prof.density[b] = static_cast<double>(prof.counts[b]) /
                      (total * annulus_volume(n, prof.bin_edges[b], prof.bin_edges[b + 1]));
  }
  return prof;
}

/// Radial profile of chart points given one per column (n inferred from the row count).
inline RadialProfile radial_profile(const Matrix& points_u, std::vector<double> bin_edges) {
  if (points_u.cols() == 0) throw ContractViolation("radial_profile: no points");
  std::vector<double> radii(static_cast<std::size_t>(points_u.cols()));
  for (Eigen::Index i = 0; i < points_u.cols(); ++i) radii[static_cast<std::size_t>(i)] = points_u.col(i).norm();
  return radial_profile_from_radii(static_cast<int>(points_u.rows()), radii, std::move(bin_edges));
}

/// Uniform S^n density carried to the chart: (1/Vol S^n) · (2/(1+r²))^n.
inline double analytic_projected_uniform(int n, double r) {
  if (!(r >= 0.0)) throw ContractViolation("analytic_projected_uniform: r must be >= 0");
  return std::exp(n * (std::numbers::ln2 - std::log1p(r * r)) - log_sphere_volume(n));
}

/// The dimension-ignoring variant (1/Vol S^n) · |det Ĵ|, where
/// Ĵ = a·I − a²·u uᵀ with a = 2/(1+r²), so det Ĵ = aⁿ · (1 − r²)/(1 + r²).
inline double naive_projected_uniform(int n, double r) {
  if (!(r >= 0.0)) throw ContractViolation("naive_projected_uniform: r must be >= 0");
  const double s = r * r;
  const double det = std::exp(n * (std::numbers::ln2 - std::log1p(s))) * std::abs((1.0 - s) / (1.0 + s));
  return det / sphere_volume(n);
}

struct CurveTriple {
  std::vector<double> radii;
  std::vector<double> empirical;
  std::vector<double> analytic;
  std::vector<double> naive;
};

inline CurveTriple curve_triple(const RadialProfile& prof) {
  CurveTriple out;
  for (std::size_t b = 0; b < prof.bins(); ++b) {
    const double r = prof.center(b);
    out.radii.push_back(r);
    out.empirical.push_back(prof.density[b]);
    out.analytic.push_back(analytic_projected_uniform(prof.dim, r));
    out.naive.push_back(naive_projected_uniform(prof.dim, r));
  }
  return out;
}

/// ∫ |a(r) − b(r)| dr over the profile's bins, with bin-center values.
inline double l1_over_radius(const RadialProfile& prof, std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < prof.bins(); ++i) sum += std::abs(a[i] - b[i]) * prof.width(i);
  return sum;
}

struct ProjectionCheck {
  RadialProfile profile;
  CurveTriple curves;
  double l1_analytic = 0.0;
  double l1_naive = 0.0;
  /// Samples whose chart coordinate was undefined (at the pole); counted as outside the profile.
  std::size_t pole_samples = 0;
};

/// Uniform S^n samples -> chart coordinates -> radial profile vs analytic and naive curves.
inline ProjectionCheck check_projected_uniform(int n, std::uint64_t seed, std::size_t count,
                                               std::size_t bins, double r_max,
                                               std::size_t chunks = kDefaultChunkCount) {
  const StereographicChart chart(n);
  const Matrix xs = sample_uniform_sphere(n, seed, count, chunks);
  std::vector<double> radii(count);
  ProjectionCheck out;
  for (std::size_t i = 0; i < count; ++i) {
    const Vector x = xs.col(static_cast<Eigen::Index>(i));
    if (chart.pole_gap(x) <= kPoleTolerance) {
      radii[i] = std::numeric_limits<double>::infinity();
      ++out.pole_samples;
      continue;
    }
    radii[i] = chart.inverse(x).norm();
  }
  out.profile = radial_profile_from_radii(n, radii, uniform_edges(r_max, bins));
  out.curves = curve_triple(out.profile);
  out.l1_analytic = l1_over_radius(out.profile, out.curves.empirical, out.curves.analytic);
  out.l1_naive = l1_over_radius(out.profile, out.curves.empirical, out.curves.naive);
  return out;
}

/// ∫_{R^n} √det G du for the S^n chart: composite Simpson in t = log(1 + r) on
/// [0, R] plus the leading-order tail Vol(S^{n-1}) · 2ⁿ / (n Rⁿ).
inline double sphere_volume_by_quadrature(int n, double radius = 1e4, int intervals = 20000) {
  if (intervals % 2 != 0) ++intervals;
  const StereographicChart chart(n);
  const double shell = sphere_volume(n - 1);  // surface of the unit sphere in R^n; 2 for n = 1
  Vector u = Vector::Zero(n);
  auto integrand = [&](double t) {
    const double r = std::expm1(t);
    u[0] = r;
    const double sqrt_det = std::exp(chart.metric_log_det(u).log_sqrt_det_g());
    return shell * std::pow(r, n - 1) * sqrt_det * (r + 1.0);  // dr = e^t dt
  };
  const double t_max = std::log1p(radius);
  const double h = t_max / intervals;
  double sum = integrand(0.0) + integrand(t_max);
  for (int i = 1; i < intervals; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * integrand(i * h);
  const double body = sum * h / 3.0;
  const double tail = shell * std::pow(2.0, n) / (n * std::pow(radius, n));
  return body + tail;
}

struct NormalizationEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
  /// Uniform draws that fell within kPoleTolerance of a chart singularity and were redrawn.
  std::size_t rejected_near_pole = 0;
};

/// Vol(M) · mean f(x) over uniform x on a compact manifold; estimates ∫_M f dx.
inline NormalizationEstimate importance_normalization(const ManifoldDensity& md, std::uint64_t seed,
                                                      std::size_t count,
                                                      std::size_t chunks = kDefaultChunkCount) {
  if (count < 2) throw ContractViolation("importance_normalization: count must be >= 2");
  if (!md.chart().is_compact()) throw ContractViolation("importance_normalization: chart must be compact");
  if (!md.can_evaluate()) {
    throw NonInvertibleFlow("importance_normalization needs a density that can be evaluated at manifold points");
  }
  const double volume = manifold_volume(md.chart());
  std::vector<double> values(count);
  std::vector<std::size_t> rejected(chunks, 0);
  for_each_chunk(chunks, [&](std::size_t c) {
    const ChunkRange range = chunk_range(count, chunks, c);
    Engine rng = make_engine(seed, c);
    for (std::size_t i = range.begin; i < range.end; ++i) {
      for (;;) {
        bool near_pole = false;
        const Vector x = draw_uniform_manifold(md.chart(), rng, near_pole);
        if (near_pole) {
          ++rejected[c];
          continue;
        }
        values[i] = volume * std::exp(md.log_prob(x));
        break;
      }
    }
  });
  NormalizationEstimate out;
  out.count = count;
  for (auto r : rejected) out.rejected_near_pole += r;
  const double n = static_cast<double>(count);
  out.estimate = pairwise_sum(values) / n;
  for (double& v : values) v = (v - out.estimate) * (v - out.estimate);
  const double variance = pairwise_sum(values) / (n - 1.0);
  out.stderr_ = std::sqrt(variance / n);
  if (!std::isfinite(out.estimate) || !std::isfinite(out.stderr_)) {
    throw NumericalFailure("importance_normalization: non-finite estimate");
  }
  return out;
}

/// ∫_{S¹} f dx by the midpoint rule in the angle θ, x(θ) = (sin θ, −cos θ).
/// The integrand is periodic and the rule stays h²/8 away from the north pole,
/// so intervals must keep h²/8 above kPoleTolerance.
inline double circle_normalization_quadrature(const ManifoldDensity& md, int intervals = 20000) {
  if (md.chart().ambient_dim() != 2 || !md.chart().is_compact()) {
    throw ContractViolation("circle_normalization_quadrature needs an S^1 chart");
  }
  std::vector<double> values(static_cast<std::size_t>(intervals));
  const double h = 2.0 * std::numbers::pi / intervals;
  Vector x(2);
  for (int i = 0; i < intervals; ++i) {
    const double theta = -std::numbers::pi + (i + 0.5) * h;
    x << std::sin(theta), -std::cos(theta);
    values[static_cast<std::size_t>(i)] = std::exp(md.log_prob(x));
  }
  return pairwise_sum(values) * h;
}

}  // namespace manifold_flow
