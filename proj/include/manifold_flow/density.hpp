#pragma once

// Densities on a manifold built from a base density on R^n, a flow chain and a chart.
//
// Chart direction (manifold -> R^n):   p(u) = f(φ(u)) · √det G(u)
// Manifold direction (R^n -> manifold): f(x) = p(u) / √det G(u),  u = φ⁻¹(x)

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "manifold_flow/charts.hpp"
#include "manifold_flow/errors.hpp"
#include "manifold_flow/flows.hpp"
#include "manifold_flow/numeric.hpp"
#include "manifold_flow/random.hpp"

namespace manifold_flow {

class BaseDensity {
public:
  enum class Kind { standard_normal, uniform_ball };

  static BaseDensity standard_normal(int n) { return BaseDensity(Kind::standard_normal, n, 0.0); }
  static BaseDensity uniform_ball(int n, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw ContractViolation("uniform_ball radius must be positive and finite");
    }
    return BaseDensity(Kind::uniform_ball, n, radius);
  }

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  double radius() const { return radius_; }

  double log_prob(const Vector& z) const {
    if (z.size() != n_) throw ContractViolation("base density: input has wrong dimension");
    if (kind_ == Kind::standard_normal) {
      return -0.5 * n_ * std::log(2.0 * std::numbers::pi) - 0.5 * z.squaredNorm();
    }
    if (z.norm() > radius_) return -std::numeric_limits<double>::infinity();
    return -(log_unit_ball_volume(n_) + n_ * std::log(radius_));
  }

  template <typename Rng>
  Vector sample(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector g(n_);
    for (int i = 0; i < n_; ++i) g[i] = normal(rng);
    if (kind_ == Kind::standard_normal) return g;
    double norm = g.norm();
    while (norm < 1e-300) {
      for (int i = 0; i < n_; ++i) g[i] = normal(rng);
      norm = g.norm();
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return g * (radius_ * std::pow(unit(rng), 1.0 / n_) / norm);
  }

private:
  BaseDensity(Kind kind, int n, double radius) : kind_(kind), n_(n), radius_(radius) {
    if (n < 1) throw ContractViolation("base density dimension must be positive");
  }

  Kind kind_;
  int n_;
  double radius_;
};

/// Orientation of the flow chain relative to the pipeline.
///
/// generative:  base draw z -> chain -> u -> chart -> x   (sampling; density at x needs an inverse)
/// normalizing: x -> chart⁻¹ -> u -> chain -> z ~ base     (density at x is direct; sampling needs an inverse)
enum class FlowDirection { generative, normalizing };

struct ManifoldSample {
  AmbientPoint x;
  double log_density = 0.0;
  Vector u_base;
  ChartPoint u_final;
};

/// log f(x) = log p(u) − ½ log det G(u) with u = φ⁻¹(x).
inline double pushforward_log_density(const Chart& chart,
                                      const std::function<double(const ChartPoint&)>& p_chart_log,
                                      const AmbientPoint& x) {
  const ChartPoint u = chart.inverse(x);
  return p_chart_log(u) - chart.metric_log_det(u).log_sqrt_det_g();
}

/// log p(u) = log f(φ(u)) + ½ log det G(u).
inline double pullback_log_density(const Chart& chart,
                                   const std::function<double(const AmbientPoint&)>& f_manifold_log,
                                   const ChartPoint& u) {
  return f_manifold_log(chart.forward(u)) + chart.metric_log_det(u).log_sqrt_det_g();
}

class ManifoldDensity {
public:
  ManifoldDensity(BaseDensity base, FlowChain chain, Chart chart,
                  FlowDirection direction = FlowDirection::generative)
      : base_(std::move(base)), chain_(std::move(chain)), chart_(std::move(chart)), direction_(direction) {
    const int n = chart_.intrinsic_dim();
    if (base_.dim() != n || chain_.dim() != n) {
      throw ContractViolation("manifold density: base (" + std::to_string(base_.dim()) + "), flow (" +
                              std::to_string(chain_.dim()) + ") and chart (" + std::to_string(n) +
                              ") dimensions differ");
    }
  }

  const BaseDensity& base() const { return base_; }
  const FlowChain& chain() const { return chain_; }
  const Chart& chart() const { return chart_; }
  FlowDirection direction() const { return direction_; }

  bool can_sample() const { return chain_.empty() || direction_ == FlowDirection::generative; }
  bool can_evaluate() const { return chain_.empty() || direction_ == FlowDirection::normalizing; }

  /// log f(x). Needs an empty chain or a normalizing-direction chain.
  double log_prob(const AmbientPoint& x) const {
    if (!can_evaluate()) {
      throw NonInvertibleFlow("log_prob at manifold points needs an identity or normalizing-direction flow");
    }
    const ChartPoint u = chart_.inverse(x);
    return log_prob_at_chart_point(u);
  }

  /// log f(φ(u)) evaluated from the chart coordinate (same contract as log_prob).
  double log_prob_at_chart_point(const ChartPoint& u) const {
    if (!can_evaluate()) {
      throw NonInvertibleFlow("log_prob at manifold points needs an identity or normalizing-direction flow");
    }
    const double half_log_det = chart_.metric_log_det(u).log_sqrt_det_g();
    if (chain_.empty()) return base_.log_prob(u) - half_log_det;
    const FlowResult fr = chain_.forward(u);
    return base_.log_prob(fr.z) + fr.log_det - half_log_det;
  }

  /// Draws one sample from a caller-owned engine.
  template <typename Rng>
  ManifoldSample sample_one(Rng& rng) const {
    ManifoldSample s;
    s.u_base = base_.sample(rng);
    const FlowResult fr = chain_.forward(s.u_base);
    s.u_final = fr.z;
    s.x = chart_.forward(s.u_final);
    s.log_density = base_.log_prob(s.u_base) - fr.log_det - chart_.metric_log_det(s.u_final).log_sqrt_det_g();
    return s;
  }

  /// `count` samples, deterministic for (seed, chunks).
  std::vector<ManifoldSample> sample(std::uint64_t seed, std::size_t count,
                                     std::size_t chunks = kDefaultChunkCount) const {
    if (count < 1) throw ContractViolation("sample count must be at least 1");
    if (chunks < 1) throw ContractViolation("chunk count must be at least 1");
    if (!can_sample()) {
      throw NonInvertibleFlow("sampling a normalizing-direction flow would need its inverse");
    }
    std::vector<ManifoldSample> out(count);
    for_each_chunk(chunks, [&](std::size_t c) {
      const ChunkRange range = chunk_range(count, chunks, c);
      Engine rng = make_engine(seed, c);
      for (std::size_t i = range.begin; i < range.end; ++i) out[i] = sample_one(rng);
    });
    return out;
  }

private:
  BaseDensity base_;
  FlowChain chain_;
  Chart chart_;
  FlowDirection direction_;
};

}  // namespace manifold_flow
