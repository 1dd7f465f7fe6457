#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "manifold_flow/density.hpp"
#include "manifold_flow/mc_verify.hpp"

using namespace manifold_flow;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_vector(int n, Engine& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

FlowChain random_chain(int n, int layers, Engine& rng) {
  std::vector<Layer> out;
  for (int k = 0; k < layers; ++k) out.push_back(random_layer(k % 2 ? LayerKind::radial : LayerKind::planar, n, rng));
  return FlowChain(n, out);
}

}  // namespace

TEST_CASE("identity density at the south pole", "[density]") {
  const ManifoldDensity md(BaseDensity::standard_normal(2), FlowChain(2), Chart::sphere(2));
  // p(0) = 1/(2π), √det G(0) = 4.
  CHECK(md.log_prob(vec({0, 0, -1})) == Approx(-std::log(8 * std::numbers::pi)).epsilon(1e-14));
  CHECK_THROWS_AS(md.log_prob(vec({0, 0, 0.5})), OffManifold);
  CHECK_THROWS_AS(md.log_prob(vec({0, 0, 1})), ChartSingularity);
}

TEST_CASE("flow direction decides what a density can do", "[density]") {
  Engine rng = make_engine(3);
  const FlowChain chain = random_chain(2, 2, rng);
  const ManifoldDensity gen(BaseDensity::standard_normal(2), chain, Chart::sphere(2));
  CHECK(gen.can_sample());
  CHECK_FALSE(gen.can_evaluate());
  CHECK_THROWS_AS(gen.log_prob(vec({0, 0, -1})), NonInvertibleFlow);
  CHECK_NOTHROW(gen.sample(1, 10));

  const ManifoldDensity norm(BaseDensity::standard_normal(2), chain, Chart::sphere(2), FlowDirection::normalizing);
  CHECK(norm.can_evaluate());
  CHECK_FALSE(norm.can_sample());
  CHECK_THROWS_AS(norm.sample(1, 10), NonInvertibleFlow);
  CHECK(std::isfinite(norm.log_prob(vec({1, 0, 0}))));

  CHECK_THROWS_AS(ManifoldDensity(BaseDensity::standard_normal(3), FlowChain(2), Chart::sphere(2)), ContractViolation);
  CHECK_THROWS_AS(BaseDensity::uniform_ball(2, 0.0), ContractViolation);
}

TEST_CASE("uniform ball base density", "[density]") {
  const BaseDensity ball = BaseDensity::uniform_ball(2, 2.0);
  CHECK(ball.log_prob(vec({0.5, 0.5})) == Approx(-std::log(4 * std::numbers::pi)).epsilon(1e-14));
  CHECK(ball.log_prob(vec({2.5, 0})) == -std::numeric_limits<double>::infinity());
  Engine rng = make_engine(4);
  for (int i = 0; i < 1000; ++i) CHECK(ball.sample(rng).norm() <= 2.0);
}

TEST_CASE("sampling is deterministic per seed and chunk count", "[density]") {
  Engine rng = make_engine(5);
  const ManifoldDensity md(BaseDensity::standard_normal(2), random_chain(2, 3, rng), Chart::sphere(2));
  const auto a = md.sample(42, 500, 4);
  const auto b = md.sample(42, 500, 4);
  const auto c = md.sample(43, 500, 4);
  REQUIRE(a.size() == 500);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].log_density == b[i].log_density);
    CHECK(std::abs(a[i].x.norm() - 1.0) <= 1e-12);
    differs = differs || a[i].x != c[i].x;
  }
  CHECK(differs);
  CHECK_THROWS_AS(md.sample(1, 0), ContractViolation);
}

TEST_CASE("log_prob of identity-chain samples matches the recorded density", "[density][property]") {
  for (int n : {1, 2, 3}) {
    const ManifoldDensity md(BaseDensity::standard_normal(n), FlowChain(n), Chart::sphere(n));
    for (const auto& s : md.sample(static_cast<std::uint64_t>(n), 200, 3)) {
      CHECK(std::abs(md.log_prob(s.x) - s.log_density) <= 1e-10);
    }
  }
}

TEST_CASE("pushforward and pullback are mutual inverses", "[density][property]") {
  Engine rng = make_engine(17);
  for (int n : {1, 2, 4}) {
    const Chart chart = Chart::sphere(n);
    const BaseDensity base = BaseDensity::standard_normal(n);
    const FlowChain chain = random_chain(n, 2, rng);
    // Any chart-coordinate log density will do; use a flowed normal.
    const auto p_log = [&](const ChartPoint& u) {
      const FlowResult r = chain.forward(u);
      return base.log_prob(r.z) + r.log_det;
    };
    const auto f_log = [&](const AmbientPoint& x) { return pushforward_log_density(chart, p_log, x); };
    for (int trial = 0; trial < 100; ++trial) {
      const Vector u = random_vector(n, rng, 2.0);
      CHECK(std::abs(pullback_log_density(chart, f_log, u) - p_log(u)) <= 1e-10);
    }
  }
}

TEST_CASE("normalizing-direction density agrees with the chart formula", "[density]") {
  Engine rng = make_engine(23);
  const Chart chart = Chart::sphere(2);
  const FlowChain chain = random_chain(2, 3, rng);
  const ManifoldDensity md(BaseDensity::standard_normal(2), chain, chart, FlowDirection::normalizing);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector u = random_vector(2, rng, 2.0);
    // Independent route: log f = log N(z) + log|det ∂z/∂u| − ½ log det G, with the
    // Jacobian and the Gram determinant both taken by finite differences.
    const FlowResult fr = chain.forward(u);
    const double log_det = chain_log_det_numeric_check(chain, u);
    const Matrix jac = chart.numeric_jacobian(u);
    const double oracle = -std::log(2 * std::numbers::pi) - 0.5 * fr.z.squaredNorm() + log_det -
                          0.5 * std::log((jac.transpose() * jac).determinant());
    CHECK(md.log_prob(chart.forward(u)) == Approx(oracle).margin(1e-5));
  }
}

namespace {

struct HistogramFit {
  double l1 = 0.0;
  /// Mean and standard deviation of L1 for a perfect sampler (normal approximation per bin).
  double null_mean = 0.0;
  double null_sd = 0.0;
};

/// L1 between a histogram of sampled chart coordinates and the bin-averaged N(0,1) density.
HistogramFit normal_histogram_fit(std::size_t count, std::uint64_t seed) {
  const ManifoldDensity md(BaseDensity::standard_normal(1), FlowChain(1), Chart::sphere(1));
  const auto samples = md.sample(seed, count);
  const int bins = 100;
  const double lo = -4.0, hi = 4.0, width = (hi - lo) / bins;
  std::vector<double> counts(bins, 0.0);
  for (const auto& s : samples) {
    const double u = s.u_final[0];
    if (u >= lo && u < hi) counts[static_cast<std::size_t>((u - lo) / width)] += 1.0;
  }
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  const double total = static_cast<double>(count);
  HistogramFit out;
  double var = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double a = lo + b * width;
    const double mass = cdf(a + width) - cdf(a);
    out.l1 += std::abs(counts[static_cast<std::size_t>(b)] / total - mass);
    out.null_mean += std::sqrt(2.0 * mass * (1.0 - mass) / (std::numbers::pi * total));
    var += (1.0 - 2.0 / std::numbers::pi) * mass * (1.0 - mass) / total;
  }
  out.null_sd = std::sqrt(var);
  return out;
}

}  // namespace

TEST_CASE("sampled chart coordinates follow the base density", "[density][property]") {
  // 10⁵ samples in 100 bins: sampling noise alone puts L1 near 0.02.
  const HistogramFit small = normal_histogram_fit(100000, 2026);
  INFO("L1 = " << small.l1 << ", perfect-sampler L1 = " << small.null_mean << " ± " << small.null_sd);
  CHECK(small.null_mean == Approx(0.0199).margin(5e-4));
  CHECK(small.l1 <= small.null_mean + 4 * small.null_sd);

  const HistogramFit large = normal_histogram_fit(1000000, 2026);
  INFO("L1 at 10^6 = " << large.l1);
  CHECK(large.l1 <= 0.02);
  CHECK(large.l1 <= large.null_mean + 4 * large.null_sd);
}

TEST_CASE("identity and flowed densities normalize", "[density][property]") {
  // n = 1: trapezoid rule over u ∈ [−10⁴, 10⁴] of p(u) = f(φ(u))·√det G(u).
  Engine rng = make_engine(29);
  for (const FlowChain& chain : {FlowChain(1), random_chain(1, 2, rng)}) {
    const ManifoldDensity md(BaseDensity::standard_normal(1), chain, Chart::sphere(1), FlowDirection::normalizing);
    const auto p = [&](double u) {
      const Vector uv = vec({u});
      return std::exp(md.log_prob_at_chart_point(uv) + md.chart().metric_log_det(uv).log_sqrt_det_g());
    };
    const int steps = 400000;
    const double a = -1e4, h = 2e4 / steps;
    double sum = 0.5 * (p(a) + p(-a));
    for (int i = 1; i < steps; ++i) sum += p(a + i * h);
    CHECK(std::abs(sum * h - 1.0) <= 1e-4);
    CHECK(std::abs(circle_normalization_quadrature(md) - 1.0) <= 1e-4);
  }

  // n = 2: importance sampling against the uniform sphere.
  const ManifoldDensity md(BaseDensity::standard_normal(2), random_chain(2, 2, rng), Chart::sphere(2),
                           FlowDirection::normalizing);
  const NormalizationEstimate est = importance_normalization(md, 77, 200000);
  INFO("estimate " << est.estimate << " ± " << est.stderr_);
  CHECK(std::abs(est.estimate - 1.0) <= 3 * est.stderr_);
}
