#pragma once

// Invertible flow layers on R^n with closed-form log-det-Jacobians.
//
// Layers are immutable values holding unconstrained ("raw") parameters; the
// constrained quantities that guarantee invertibility are derived on the fly,
// so any raw parameter vector is a valid layer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "manifold_flow/errors.hpp"
#include "manifold_flow/numeric.hpp"

namespace manifold_flow {

struct FlowResult {
  Vector z;
  double log_det = 0.0;
};

/// Value of softplus(a) − 1 is zero here, so raw u = kPlanarIdentityShift·w/‖w‖² gives û = 0.
inline const double kPlanarIdentityShift = std::log(std::numbers::e - 1.0);

/// z′ = z + û·tanh(wᵀz + b)
///
/// û is derived from the raw vector so that wᵀû = softplus(wᵀu_raw) − 1 > −1.
class PlanarLayer {
public:
  PlanarLayer(Vector w, Vector u_raw, double b) : w_(std::move(w)), u_raw_(std::move(u_raw)), b_(b) {
    if (w_.size() == 0 || w_.size() != u_raw_.size()) {
      throw ContractViolation("planar layer: w and u must share a positive dimension");
    }
    if (!w_.allFinite() || !u_raw_.allFinite() || !std::isfinite(b_)) {
      throw ContractViolation("planar layer: parameters must be finite");
    }
    const double w_sq = w_.squaredNorm();
    if (!(w_sq > 0.0)) throw ContractViolation("planar layer: w must be nonzero");
    const double wu = w_.dot(u_raw_);
    // 1 + wᵀû = softplus(wᵀu_raw), floored so the strict bound survives underflow.
    one_plus_wu_hat_ = std::max(softplus(wu), std::numeric_limits<double>::denorm_min());
    u_hat_ = u_raw_ + ((one_plus_wu_hat_ - 1.0 - wu) / w_sq) * w_;
  }

  /// Layer with û = 0 (the identity map) for the given w and b.
  static PlanarLayer zero_strength(Vector w, double b) {
    const double w_sq = w.squaredNorm();
    if (!(w_sq > 0.0)) throw ContractViolation("planar layer: w must be nonzero");
    Vector u_raw = (kPlanarIdentityShift / w_sq) * w;
    return PlanarLayer(std::move(w), std::move(u_raw), b);
  }

  int dim() const { return static_cast<int>(w_.size()); }
  const Vector& w() const { return w_; }
  const Vector& u_raw() const { return u_raw_; }
  double b() const { return b_; }
  const Vector& u_hat() const { return u_hat_; }
  double w_dot_u_hat() const { return one_plus_wu_hat_ - 1.0; }
  /// 1 + wᵀû, kept separately because it can be far below the resolution of w_dot_u_hat().
  double one_plus_w_dot_u_hat() const { return one_plus_wu_hat_; }

  FlowResult forward(const Vector& z) const {
    check_input(z);
    FlowResult out{z, 0.0};
    out.log_det = apply(out.z);
    return out;
  }

  /// Transforms z in place and returns the log-det; no dimension checks.
  double apply(Vector& z) const {
    const double t = std::tanh(w_.dot(z) + b_);
    const double sech2 = 1.0 - t * t;
    z.noalias() += u_hat_ * t;
    // 1 + wᵀû·sech² rewritten as t² + (1 + wᵀû)·sech², which stays positive.
    return std::log(t * t + one_plus_wu_hat_ * sech2);
  }

  static constexpr int parameter_count(int n) { return 2 * n + 1; }

  /// [w, u_raw, b]
  void write_parameters(std::span<double> out) const {
    const int n = dim();
    for (int i = 0; i < n; ++i) {
      out[i] = w_[i];
      out[n + i] = u_raw_[i];
    }
    out[2 * n] = b_;
  }

  static PlanarLayer from_parameters(int n, std::span<const double> p) {
    Vector w(n), u(n);
    for (int i = 0; i < n; ++i) {
      w[i] = p[i];
      u[i] = p[n + i];
    }
    return PlanarLayer(std::move(w), std::move(u), p[2 * n]);
  }

private:
  void check_input(const Vector& z) const {
    if (z.size() != w_.size()) throw ContractViolation("planar layer: input has wrong dimension");
    if (!z.allFinite()) throw ContractViolation("planar layer: input is not finite");
  }

  Vector w_;
  Vector u_raw_;
  double b_;
  Vector u_hat_;
  double one_plus_wu_hat_ = 1.0;
};

/// z′ = z + β·(z − z₀)/(α + r),  r = ‖z − z₀‖
///
/// α = softplus(α_raw) > 0 and β = −α + softplus(β_raw) ≥ −α keep the map invertible.
class RadialLayer {
public:
  RadialLayer(Vector center, double alpha_raw, double beta_raw)
      : center_(std::move(center)), alpha_raw_(alpha_raw), beta_raw_(beta_raw) {
    if (center_.size() == 0) throw ContractViolation("radial layer: empty center");
    if (!center_.allFinite() || !std::isfinite(alpha_raw_) || !std::isfinite(beta_raw_)) {
      throw ContractViolation("radial layer: parameters must be finite");
    }
    alpha_ = softplus(alpha_raw_);
    beta_ = -alpha_ + softplus(beta_raw_);
  }

  /// Layer with β = 0 (the identity map).
  static RadialLayer zero_strength(Vector center, double alpha_raw) {
    const double alpha = softplus(alpha_raw);
    return RadialLayer(std::move(center), alpha_raw, softplus_inverse(alpha));
  }

  int dim() const { return static_cast<int>(center_.size()); }
  const Vector& center() const { return center_; }
  double alpha_raw() const { return alpha_raw_; }
  double beta_raw() const { return beta_raw_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  FlowResult forward(const Vector& z) const {
    if (z.size() != center_.size()) throw ContractViolation("radial layer: input has wrong dimension");
    if (!z.allFinite()) throw ContractViolation("radial layer: input is not finite");
    FlowResult out{z, 0.0};
    out.log_det = apply(out.z);
    return out;
  }

  /// Transforms z in place and returns the log-det; no dimension checks.
  double apply(Vector& z) const {
    const double r = (z - center_).norm();
    const double h = 1.0 / (alpha_ + r);
    const double bh = beta_ * h;
    z = z + bh * (z - center_);
    // 1 + βh + βh′r with h′ = −h² simplifies to 1 + βαh².
    return (dim() - 1) * std::log1p(bh) + std::log1p(beta_ * alpha_ * h * h);
  }

  static constexpr int parameter_count(int n) { return n + 2; }

  /// [z₀, α_raw, β_raw]
  void write_parameters(std::span<double> out) const {
    const int n = dim();
    for (int i = 0; i < n; ++i) out[i] = center_[i];
    out[n] = alpha_raw_;
    out[n + 1] = beta_raw_;
  }

  static RadialLayer from_parameters(int n, std::span<const double> p) {
    Vector c(n);
    for (int i = 0; i < n; ++i) c[i] = p[i];
    return RadialLayer(std::move(c), p[n], p[n + 1]);
  }

private:
  Vector center_;
  double alpha_raw_;
  double beta_raw_;
  double alpha_ = 0.0;
  double beta_ = 0.0;
};

using Layer = std::variant<PlanarLayer, RadialLayer>;

enum class LayerKind { planar, radial };

inline LayerKind kind_of(const Layer& layer) {
  return std::holds_alternative<PlanarLayer>(layer) ? LayerKind::planar : LayerKind::radial;
}

inline int layer_dim(const Layer& layer) {
  return std::visit([](const auto& l) { return l.dim(); }, layer);
}

inline FlowResult layer_forward(const Layer& layer, const Vector& z) {
  return std::visit([&](const auto& l) { return l.forward(z); }, layer);
}

inline int parameter_count(LayerKind kind, int n) {
  return kind == LayerKind::planar ? PlanarLayer::parameter_count(n)
                                   : RadialLayer::parameter_count(n);
}

/// Ordered composition of layers sharing one dimension.
class FlowChain {
public:
  explicit FlowChain(int dim, std::vector<Layer> layers = {}) : dim_(dim), layers_(std::move(layers)) {
    if (dim_ < 1) throw ContractViolation("flow chain dimension must be positive");
    for (const auto& l : layers_) {
      if (layer_dim(l) != dim_) throw ContractViolation("flow chain: layer dimension mismatch");
    }
  }

  int dim() const { return dim_; }
  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  FlowResult forward(const Vector& z) const {
    if (z.size() != dim_) throw ContractViolation("flow chain: input has wrong dimension");
    if (!z.allFinite()) throw ContractViolation("flow chain: input is not finite");
    FlowResult acc{z, 0.0};
    acc.log_det = apply(acc.z);
    return acc;
  }

  /// In-place forward map of a correctly sized z; returns the total log-det.
  double apply(Vector& z) const {
    double log_det = 0.0;
    for (const auto& layer : layers_) {
      log_det += std::visit([&z](const auto& l) { return l.apply(z); }, layer);
    }
    return log_det;
  }

  /// Per-layer log-dets along the trajectory of z (for additivity checks).
  std::vector<double> layer_log_dets(const Vector& z) const {
    std::vector<double> out;
    out.reserve(layers_.size());
    Vector cur = z;
    for (const auto& layer : layers_) {
      FlowResult step = layer_forward(layer, cur);
      out.push_back(step.log_det);
      cur = std::move(step.z);
    }
    return out;
  }

  int parameter_count() const {
    int total = 0;
    for (const auto& l : layers_) total += manifold_flow::parameter_count(kind_of(l), dim_);
    return total;
  }

  /// All raw parameters, layer by layer.
  Vector parameters() const {
    Vector p(parameter_count());
    std::span<double> out(p.data(), static_cast<std::size_t>(p.size()));
    std::size_t offset = 0;
    for (const auto& l : layers_) {
      const auto count = static_cast<std::size_t>(manifold_flow::parameter_count(kind_of(l), dim_));
      std::visit([&](const auto& layer) { layer.write_parameters(out.subspan(offset, count)); }, l);
      offset += count;
    }
    return p;
  }

  /// A chain with this chain's architecture and the given raw parameters.
  FlowChain with_parameters(const Vector& p) const {
    if (p.size() != parameter_count()) throw ContractViolation("flow chain: parameter count mismatch");
    std::span<const double> in(p.data(), static_cast<std::size_t>(p.size()));
    std::vector<Layer> layers;
    layers.reserve(layers_.size());
    std::size_t offset = 0;
    for (const auto& l : layers_) {
      const auto count = static_cast<std::size_t>(manifold_flow::parameter_count(kind_of(l), dim_));
      if (kind_of(l) == LayerKind::planar) {
        layers.emplace_back(PlanarLayer::from_parameters(dim_, in.subspan(offset, count)));
      } else {
        layers.emplace_back(RadialLayer::from_parameters(dim_, in.subspan(offset, count)));
      }
      offset += count;
    }
    return FlowChain(dim_, std::move(layers));
  }

private:
  int dim_;
  std::vector<Layer> layers_;
};

/// log|det| of the central-difference Jacobian of the chain's forward map.
inline double chain_log_det_numeric_check(const FlowChain& chain, const Vector& z, double h = 1e-6) {
  const Matrix jac = central_difference_jacobian(
      [&chain](const Vector& p) { return chain.forward(p).z; }, z, h);
  Eigen::PartialPivLU<Matrix> lu(jac);
  const Matrix& lu_mat = lu.matrixLU();
  double log_abs_det = 0.0;
  for (Eigen::Index i = 0; i < lu_mat.rows(); ++i) {
    const double pivot = std::abs(lu_mat(i, i));
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      throw DegenerateFlow("numeric flow Jacobian is singular");
    }
    log_abs_det += std::log(pivot);
  }
  return log_abs_det;
}

/// Random layer of moderate strength (used for seeded layers in model configs).
template <typename Rng>
Layer random_layer(LayerKind kind, int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a(n), c(n);
  for (int i = 0; i < n; ++i) a[i] = normal(rng);
  for (int i = 0; i < n; ++i) c[i] = normal(rng);
  const double s = normal(rng);
  const double t = normal(rng);
  if (kind == LayerKind::planar) {
    if (a.squaredNorm() < 1e-8) a[0] = 1.0;
    return PlanarLayer(std::move(a), std::move(c), s);
  }
  return RadialLayer(std::move(a), s, t);
}

/// Layer within N(0, scale²) noise of the identity map.
template <typename Rng>
Layer near_identity_layer(LayerKind kind, int n, Rng& rng, double scale = 0.01) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a(n);
  for (int i = 0; i < n; ++i) a[i] = normal(rng);
  const double s = normal(rng);
  if (kind == LayerKind::planar) {
    if (a.squaredNorm() < 1e-8) a[0] = 1.0;
    const double w_sq = a.squaredNorm();
    Vector u_raw = (kPlanarIdentityShift / w_sq) * a;
    for (int i = 0; i < n; ++i) u_raw[i] += scale * normal(rng);
    return PlanarLayer(std::move(a), std::move(u_raw), s);
  }
  // β = softplus(β_raw) − softplus(α_raw) vanishes at β_raw = α_raw.
  return RadialLayer(std::move(a), s, s + scale * normal(rng));
}

inline std::string to_string(LayerKind kind) { return kind == LayerKind::planar ? "planar" : "radial"; }

}  // namespace manifold_flow
