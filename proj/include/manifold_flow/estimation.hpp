#pragma once

// Maximum-likelihood fitting of flow parameters to points on a manifold.
//
// The chain is oriented data -> base (normalizing direction), so the model's
// log-density at a data point needs no flow inverse:
//   u = φ⁻¹(x),  (z, L) = chain(u),  log f(x) = log p_base(z) + L − ½ log det G(u)
// Optimization is plain gradient ascent on the mean log-likelihood with
// central-difference gradients and a halving line search.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "manifold_flow/charts.hpp"
#include "manifold_flow/density.hpp"
#include "manifold_flow/errors.hpp"
#include "manifold_flow/flows.hpp"
#include "manifold_flow/numeric.hpp"
#include "manifold_flow/random.hpp"

namespace manifold_flow {

/// Manifold-valued observations (one point per column) that passed chart validation.
class Dataset {
public:
  /// Validates every column against the chart; all failures are reported together.
  static Dataset validated(const Chart& chart, Matrix points) {
    std::vector<DataValidation::Row> bad;
    if (points.rows() != chart.ambient_dim()) {
      throw DataValidation({{0, "points have dimension " + std::to_string(points.rows()) +
                                    ", chart expects " + std::to_string(chart.ambient_dim())}});
    }
    Matrix coords(chart.intrinsic_dim(), points.cols());
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      const auto index = static_cast<std::size_t>(i);
      try {
        coords.col(i) = chart.inverse(points.col(i));
      } catch (const OffManifold& e) {
        bad.push_back({index, std::string("off manifold: ") + e.what()});
      } catch (const ChartSingularity& e) {
        bad.push_back({index, std::string("at chart singularity: ") + e.what()});
      } catch (const ContractViolation& e) {
        bad.push_back({index, e.what()});
      }
    }
    if (!bad.empty()) throw DataValidation(std::move(bad));
    if (points.cols() == 0) throw DataValidation({{0, "data set is empty"}});
    return Dataset(chart, std::move(points), std::move(coords));
  }

  const Chart& chart() const { return chart_; }
  const Matrix& points() const { return points_; }
  /// Chart coordinates φ⁻¹(x), one per column.
  const Matrix& chart_coords() const { return coords_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  int intrinsic_dim() const { return chart_.intrinsic_dim(); }
  int ambient_dim() const { return chart_.ambient_dim(); }

private:
  Dataset(Chart chart, Matrix points, Matrix coords)
      : chart_(std::move(chart)), points_(std::move(points)), coords_(std::move(coords)) {}

  Chart chart_;
  Matrix points_;
  Matrix coords_;
};

/// Mean data log-likelihood as a function of the chain, with the
/// parameter-independent chart terms computed once.
class LikelihoodObjective {
public:
  LikelihoodObjective(const Dataset& data, BaseDensity base) : base_(std::move(base)), coords_(data.chart_coords()) {
    if (base_.dim() != data.intrinsic_dim()) throw ContractViolation("likelihood: base and chart dimensions differ");
    half_log_det_.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      half_log_det_[i] = data.chart().metric_log_det(coords_.col(static_cast<Eigen::Index>(i))).log_sqrt_det_g();
    }
    terms_.resize(data.size());
  }

  /// Mean log f(x_i). Throws NumericalFailure if any term is non-finite.
  double operator()(const FlowChain& chain) const {
    const double mean = evaluate(chain);
    if (!std::isfinite(mean)) throw NumericalFailure("data log-likelihood is not finite");
    return mean;
  }

  /// Same as operator() but reports failure as NaN instead of throwing.
  double evaluate(const FlowChain& chain) const {
    if (chain.dim() != base_.dim()) throw ContractViolation("likelihood: chain dimension differs from data");
    Vector z(coords_.rows());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      z = coords_.col(static_cast<Eigen::Index>(i));
      const double log_det = chain.apply(z);
      terms_[i] = base_.log_prob(z) + log_det - half_log_det_[i];
    }
    const double mean = pairwise_sum(terms_) / static_cast<double>(terms_.size());
    return std::isfinite(mean) ? mean : std::numeric_limits<double>::quiet_NaN();
  }

private:
  BaseDensity base_;
  Matrix coords_;
  std::vector<double> half_log_det_;
  mutable std::vector<double> terms_;
};

inline double data_log_likelihood(const Chart& chart, const FlowChain& chain, const BaseDensity& base,
                                  const Dataset& data) {
  if (data.chart().ambient_dim() != chart.ambient_dim() || data.chart().intrinsic_dim() != chart.intrinsic_dim()) {
    throw ContractViolation("data set was validated against a different chart");
  }
  return LikelihoodObjective(data, base)(chain);
}

using Objective = std::function<double(const Vector&)>;

/// Central-difference gradient, one parameter at a time.
inline Vector fd_gradient(const Objective& objective, const Vector& params, double fd_step) {
  if (!(fd_step > 0.0)) throw ContractViolation("fd_gradient: step must be positive");
  Vector grad(params.size());
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + fd_step;
    const double plus = objective(probe);
    probe[i] = params[i] - fd_step;
    const double minus = objective(probe);
    probe[i] = params[i];
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericalFailure("fd_gradient: objective not finite near parameter " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * fd_step);
  }
  return grad;
}

struct FitConfig {
  int layer_count = 4;
  LayerKind layer_kind = LayerKind::planar;
  double step_size = 1e-2;
  int max_iters = 2000;
  double grad_tolerance = 1e-5;
  double fd_step = 1e-5;
  std::uint64_t rng_seed = 0;
  /// Line search halvings before an iteration gives up.
  int max_halvings = 30;

  void validate() const {
    if (layer_count < 0) throw ConfigError("fit: layer_count must be >= 0");
    if (!(step_size > 0.0)) throw ConfigError("fit: step_size must be positive");
    if (max_iters < 0) throw ConfigError("fit: max_iters must be >= 0");
    if (!(grad_tolerance > 0.0)) throw ConfigError("fit: grad_tolerance must be positive");
    if (!(fd_step > 0.0)) throw ConfigError("fit: fd_step must be positive");
    if (max_halvings < 0) throw ConfigError("fit: max_halvings must be >= 0");
  }
};

enum class StopReason { no_parameters, gradient_tolerance, max_iterations, line_search_exhausted };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::no_parameters: return "no_parameters";
    case StopReason::gradient_tolerance: return "gradient_tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search_exhausted: return "line_search_exhausted";
  }
  return "unknown";
}

struct FitReport {
  /// Mean negative log-likelihood: initial value, then one entry per accepted step.
  std::vector<double> objective_trace;
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  Vector final_params;
  FlowChain final_chain{1};
  double grad_norm_final = 0.0;
  int iterations_used = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iterations;
};

/// Chain of cfg.layer_count near-identity layers of cfg.layer_kind, seeded from cfg.rng_seed.
inline FlowChain initial_chain(int n, const FitConfig& cfg) {
  Engine rng = make_engine(cfg.rng_seed);
  std::vector<Layer> layers;
  for (int i = 0; i < cfg.layer_count; ++i) layers.push_back(near_identity_layer(cfg.layer_kind, n, rng));
  return FlowChain(n, std::move(layers));
}

/// Gradient ascent on the mean log-likelihood, starting from `start`.
inline FitReport fit_from(const BaseDensity& base, const Dataset& data, const FitConfig& cfg, const FlowChain& start) {
  cfg.validate();
  if (start.dim() != data.intrinsic_dim()) throw ContractViolation("fit: chain dimension differs from data");
  const LikelihoodObjective likelihood(data, base);
  const Objective objective = [&](const Vector& p) -> double {
    try {
      return likelihood.evaluate(start.with_parameters(p));
    } catch (const ContractViolation&) {
      // Raw parameters outside a layer's domain (e.g. w = 0).
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  FitReport report;
  Vector params = start.parameters();
  double ll = objective(params);
  if (!std::isfinite(ll)) throw NumericalFailure("fit: initial log-likelihood is not finite");
  report.initial_log_likelihood = ll;
  report.objective_trace.push_back(-ll);

  if (params.size() == 0) {
    report.converged = true;
    report.stop_reason = StopReason::no_parameters;
  } else {
    report.stop_reason = StopReason::max_iterations;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      const Vector grad = fd_gradient(objective, params, cfg.fd_step);
      report.grad_norm_final = grad.norm();
      if (report.grad_norm_final <= cfg.grad_tolerance) {
        report.converged = true;
        report.stop_reason = StopReason::gradient_tolerance;
        break;
      }
      double step = cfg.step_size;
      bool accepted = false;
      for (int halving = 0; halving <= cfg.max_halvings; ++halving, step *= 0.5) {
        Vector candidate = params + step * grad;
        const double cand_ll = objective(candidate);
        if (std::isfinite(cand_ll) && cand_ll >= ll) {
          params = std::move(candidate);
          ll = cand_ll;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        report.stop_reason = StopReason::line_search_exhausted;
        break;
      }
      ++report.iterations_used;
      report.objective_trace.push_back(-ll);
    }
  }
  report.final_params = params;
  report.final_chain = start.with_parameters(params);
  report.final_log_likelihood = ll;
  return report;
}

inline FitReport fit(const Chart& chart, const BaseDensity& base, const Dataset& data, const FitConfig& cfg) {
  cfg.validate();
  if (data.chart().ambient_dim() != chart.ambient_dim() || data.chart().intrinsic_dim() != chart.intrinsic_dim()) {
    throw ContractViolation("data set was validated against a different chart");
  }
  return fit_from(base, data, cfg, initial_chain(chart.intrinsic_dim(), cfg));
}

/// The fitted model as a density on the manifold (evaluable, not sampleable).
inline ManifoldDensity fitted_density(const Chart& chart, const BaseDensity& base, const FitReport& report) {
  return ManifoldDensity(base, report.final_chain, chart, FlowDirection::normalizing);
}

}  // namespace manifold_flow
