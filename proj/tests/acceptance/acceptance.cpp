// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "manifold_flow/manifold_flow.hpp"
#include "vmf.hpp"

using namespace manifold_flow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> body;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Vector random_point(int n, double max_norm, Engine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector g(n);
  for (int i = 0; i < n; ++i) g[i] = normal(rng);
  return g.normalized() * (max_norm * unit(rng));
}

Outcome metric_closed_form() {
  Engine rng = make_engine(1001);
  double worst = 0.0;
  for (int n : {1, 2, 3, 5, 10}) {
    const Chart chart = Chart::sphere(n);
    for (int i = 0; i < 100; ++i) {
      const Vector u = random_point(n, 10.0, rng);
      const double closed = chart.metric_log_det(u).det_g();
      const double numeric = chart.metric_log_det_numeric(u).det_g();
      worst = std::max(worst, std::abs(numeric - closed) / closed);
    }
  }
  return {worst <= 1e-5, "max rel err " + fmt(worst) + " (tol 1e-5)"};
}

Outcome volume_recovery() {
  const double s1 = sphere_volume_by_quadrature(1);
  const double s2 = sphere_volume_by_quadrature(2);
  const double e1 = std::abs(s1 - 2 * std::numbers::pi) / (2 * std::numbers::pi);
  const double e2 = std::abs(s2 - 4 * std::numbers::pi) / (4 * std::numbers::pi);
  return {e1 <= 1e-6 && e2 <= 1e-3, "S1 rel err " + fmt(e1) + " (tol 1e-6), S2 rel err " + fmt(e2) + " (tol 1e-3)"};
}

Outcome projected_uniform() {
  const ProjectionCheck c = check_projected_uniform(2, 500, 500000, 50, 5.0);
  const double ratio = c.l1_naive / c.l1_analytic;
  return {c.l1_analytic <= 0.05 && ratio >= 3.0,
          "L1 analytic " + fmt(c.l1_analytic) + " (tol 0.05), L1 naive " + fmt(c.l1_naive) + ", ratio " + fmt(ratio) +
              " (min 3)"};
}

Outcome round_trip() {
  Engine rng = make_engine(1004);
  double worst_inverse = 0.0, worst_norm = 0.0;
  const int dims[] = {1, 2, 3, 5, 10};
  for (int i = 0; i < 100000; ++i) {
    const int n = dims[i % 5];
    const Chart chart = Chart::sphere(n);
    const Vector u = random_point(n, 100.0, rng);
    const Vector x = chart.forward(u);
    worst_norm = std::max(worst_norm, std::abs(x.norm() - 1.0));
    worst_inverse = std::max(worst_inverse, (chart.inverse(x) - u).cwiseAbs().maxCoeff());
  }
  return {worst_inverse <= 1e-9 && worst_norm <= 1e-12,
          "max |inverse(forward(u)) - u| " + fmt(worst_inverse) + " (tol 1e-9), max | |x| - 1 | " + fmt(worst_norm) +
              " (tol 1e-12)"};
}

Outcome flow_log_det() {
  Engine rng = make_engine(1005);
  std::normal_distribution<double> normal(0.0, 2.0);
  double worst = 0.0;
  for (LayerKind kind : {LayerKind::planar, LayerKind::radial}) {
    for (int n : {1, 2, 3, 5}) {
      for (int i = 0; i < 100; ++i) {
        const FlowChain single(n, {random_layer(kind, n, rng)});
        Vector z(n);
        for (int k = 0; k < n; ++k) z[k] = normal(rng);
        worst = std::max(worst, std::abs(single.forward(z).log_det - chain_log_det_numeric_check(single, z)));
      }
    }
  }
  return {worst <= 1e-5, "max abs err " + fmt(worst) + " (tol 1e-5)"};
}

Outcome normalization() {
  Engine rng = make_engine(1006);
  const FlowChain chain2(2, {random_layer(LayerKind::planar, 2, rng), random_layer(LayerKind::radial, 2, rng),
                             random_layer(LayerKind::planar, 2, rng)});
  const ManifoldDensity identity2(BaseDensity::standard_normal(2), FlowChain(2), Chart::sphere(2));
  const ManifoldDensity flowed2(BaseDensity::standard_normal(2), chain2, Chart::sphere(2), FlowDirection::normalizing);
  const NormalizationEstimate a = importance_normalization(identity2, 61, 1000000);
  const NormalizationEstimate b = importance_normalization(flowed2, 62, 1000000);
  const double za = std::abs(a.estimate - 1.0) / a.stderr_;
  const double zb = std::abs(b.estimate - 1.0) / b.stderr_;

  const FlowChain chain1(1, {random_layer(LayerKind::planar, 1, rng), random_layer(LayerKind::radial, 1, rng)});
  const ManifoldDensity identity1(BaseDensity::standard_normal(1), FlowChain(1), Chart::sphere(1));
  const ManifoldDensity flowed1(BaseDensity::standard_normal(1), chain1, Chart::sphere(1), FlowDirection::normalizing);
  const double q1 = std::abs(circle_normalization_quadrature(identity1) - 1.0);
  const double q2 = std::abs(circle_normalization_quadrature(flowed1) - 1.0);

  std::ostringstream d;
  d << "S2 identity " << fmt(a.estimate) << " (" << fmt(za) << " se), S2 flowed " << fmt(b.estimate) << " ("
    << fmt(zb) << " se), tol 3 se; S1 quadrature err " << fmt(q1) << " / " << fmt(q2) << " (tol 1e-3)";
  return {za <= 3 && zb <= 3 && q1 <= 1e-3 && q2 <= 1e-3, d.str()};
}

Dataset vmf_dataset() {
  Vector mu(3);
  mu << 1, 0, 0;
  Engine rng = make_engine(42);
  return Dataset::validated(Chart::sphere(2), testing::sample_antipodal_vmf_mixture(mu, 10.0, 2000, rng));
}

Outcome estimation() {
  const Dataset data = vmf_dataset();
  const BaseDensity base = BaseDensity::standard_normal(2);
  FitConfig cfg;
  cfg.layer_count = 0;
  const FitReport baseline = fit(data.chart(), base, data, cfg);
  cfg.layer_count = 4;
  cfg.layer_kind = LayerKind::planar;
  cfg.rng_seed = 5;
  const FitReport first = fit(data.chart(), base, data, cfg);
  const FitReport second = fit(data.chart(), base, data, cfg);

  bool monotone = true;
  for (std::size_t i = 1; i < first.objective_trace.size(); ++i) {
    monotone = monotone && first.objective_trace[i] <= first.objective_trace[i - 1];
  }
  const bool identical = first.objective_trace == second.objective_trace && first.final_params == second.final_params;
  const double gain = first.final_log_likelihood - baseline.final_log_likelihood;
  std::ostringstream d;
  d << "baseline LL " << fmt(baseline.final_log_likelihood) << ", fitted LL " << fmt(first.final_log_likelihood)
    << ", gain " << fmt(gain) << " nats (min 0.1), " << first.iterations_used << " iterations, monotone "
    << (monotone ? "yes" : "no") << ", rerun identical " << (identical ? "yes" : "no");
  return {gain > 0.1 && monotone && identical, d.str()};
}

Outcome gradient_consistency() {
  const Dataset data = vmf_dataset();
  const LikelihoodObjective likelihood(data, BaseDensity::standard_normal(2));
  Engine rng = make_engine(1008);
  const double h = FitConfig{}.fd_step;
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    std::vector<Layer> layers;
    for (int k = 0; k < 4; ++k) layers.push_back(random_layer(LayerKind::planar, 2, rng));
    const FlowChain chain(2, layers);
    const Objective objective = [&](const Vector& p) { return likelihood(chain.with_parameters(p)); };
    const Vector g1 = fd_gradient(objective, chain.parameters(), h);
    const Vector g2 = fd_gradient(objective, chain.parameters(), h / 2);
    worst = std::max(worst, (g1 - g2).norm() / g1.norm());
  }
  return {worst <= 1e-3, "max rel diff " + fmt(worst) + " (tol 1e-3)"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"metric closed form vs finite differences", 5, metric_closed_form},
      {"volume recovery by quadrature", 10, volume_recovery},
      {"projected uniform sphere profile at 500k samples", 60, projected_uniform},
      {"round trip and on-manifold invariants", 5, round_trip},
      {"flow log-det analytic vs numeric", 10, flow_log_det},
      {"normalization of composed manifold densities", 60, normalization},
      {"maximum-likelihood fit on antipodal vMF mixture", 300, estimation},
      {"finite-difference gradient step-halving", 30, gradient_consistency},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s  %s: %s; %.2f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
