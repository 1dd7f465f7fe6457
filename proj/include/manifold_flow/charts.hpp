#pragma once

// Chart homeomorphisms R^n -> M ⊂ R^m and their induced volume elements.
//
// A chart maps intrinsic coordinates u to an embedded point x = φ(u). The
// induced metric is G(u) = J(u)ᵀ J(u) with J the m×n Jacobian of φ, and
// √det G is the factor relating chart-coordinate and manifold volumes.
// All determinant work is done in log space.

#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "manifold_flow/errors.hpp"
#include "manifold_flow/numeric.hpp"

namespace manifold_flow {

using ChartPoint = Vector;
using AmbientPoint = Vector;

/// Tolerance on |‖x‖ − 1| for accepting a point as lying on a sphere.
inline constexpr double kOnManifoldTolerance = 1e-9;
/// Points with 1 − x_{n+1} at or below this are treated as the north pole.
inline constexpr double kPoleTolerance = 1e-9;
inline constexpr double kDefaultJacobianStep = 1e-6;

struct MetricResult {
  double log_det_g = 0.0;

  double log_sqrt_det_g() const { return 0.5 * log_det_g; }
  double det_g() const { return std::exp(log_det_g); }
};

/// Inverse stereographic projection R^n -> S^n ⊂ R^{n+1} from the north pole.
///
///   φ(u) = [ 2u / (uᵀu + 1) ; 1 − 2 / (uᵀu + 1) ]
///
/// The origin maps to the south pole (0,…,0,−1); the north pole is not in the image.
class StereographicChart {
public:
  explicit StereographicChart(int n) : n_(n) {
    if (n < 1) throw ContractViolation("stereographic chart needs n >= 1");
  }

  int intrinsic_dim() const { return n_; }
  int ambient_dim() const { return n_ + 1; }

  AmbientPoint forward(const ChartPoint& u) const {
    check_dim(u);
    const double s = u.squaredNorm();
    const double scale = 2.0 / (s + 1.0);
    AmbientPoint x(n_ + 1);
    x.head(n_) = scale * u;
    x[n_] = 1.0 - scale;
    return x;
  }

  ChartPoint inverse(const AmbientPoint& x) const {
    if (x.size() != n_ + 1) {
      throw ContractViolation("stereographic inverse: expected ambient dim " +
                              std::to_string(n_ + 1) + ", got " + std::to_string(x.size()));
    }
    if (!x.allFinite()) throw ContractViolation("stereographic inverse: non-finite point");
    const double radius = x.norm();
    if (std::abs(radius - 1.0) > kOnManifoldTolerance) {
      throw OffManifold("point is off the sphere: |x| = " + std::to_string(radius));
    }
    const double gap = 1.0 - x[n_];
    if (gap <= kPoleTolerance) throw ChartSingularity("point is at the north pole of the chart");
    return x.head(n_) / gap;
  }

  /// log det G = 2n · log(2 / (uᵀu + 1)).
  MetricResult metric_log_det(const ChartPoint& u) const {
    check_dim(u);
    return {2.0 * n_ * (std::numbers::ln2 - std::log1p(u.squaredNorm()))};
  }

  /// Analytic Jacobian; used by the naive (square) determinant and in tests.
  Matrix jacobian(const ChartPoint& u) const {
    check_dim(u);
    const double s = u.squaredNorm();
    const double a = 2.0 / (s + 1.0);
    Matrix jac(n_ + 1, n_);
    jac.topRows(n_) = a * Matrix::Identity(n_, n_) - (a * a) * u * u.transpose();
    jac.row(n_) = (a * a) * u.transpose();
    return jac;
  }

  /// Distance-to-singularity 1 − x_{n+1} for a point already on the sphere.
  double pole_gap(const AmbientPoint& x) const { return 1.0 - x[n_]; }

private:
  void check_dim(const ChartPoint& u) const {
    if (u.size() != n_) {
      throw ContractViolation("chart point has dim " + std::to_string(u.size()) +
                              ", chart expects " + std::to_string(n_));
    }
    if (!u.allFinite()) throw ContractViolation("chart point is not finite");
  }

  int n_;
};

/// Identity chart of R^n, the flat factor in cylinders S^k × R^j.
class EuclideanChart {
public:
  explicit EuclideanChart(int n) : n_(n) {
    if (n < 1) throw ContractViolation("euclidean chart needs n >= 1");
  }

  int intrinsic_dim() const { return n_; }
  int ambient_dim() const { return n_; }

  AmbientPoint forward(const ChartPoint& u) const {
    check_dim(u, "chart point");
    return u;
  }
  ChartPoint inverse(const AmbientPoint& x) const {
    check_dim(x, "ambient point");
    return x;
  }
  MetricResult metric_log_det(const ChartPoint& u) const {
    check_dim(u, "chart point");
    return {0.0};
  }
  Matrix jacobian(const ChartPoint& u) const {
    check_dim(u, "chart point");
    return Matrix::Identity(n_, n_);
  }

private:
  void check_dim(const Vector& v, const char* what) const {
    if (v.size() != n_) {
      throw ContractViolation(std::string(what) + " has dim " + std::to_string(v.size()) +
                              ", chart expects " + std::to_string(n_));
    }
    if (!v.allFinite()) throw ContractViolation(std::string(what) + " is not finite");
  }

  int n_;
};

class Chart;

/// Cartesian product of charts. Coordinates and embeddings are concatenated in
/// component order; JᵀJ is block diagonal so log det G is the sum over blocks.
class ProductChart {
public:
  explicit ProductChart(std::vector<Chart> components);

  int intrinsic_dim() const { return intrinsic_dim_; }
  int ambient_dim() const { return ambient_dim_; }
  const std::vector<Chart>& components() const { return components_; }

  AmbientPoint forward(const ChartPoint& u) const;
  ChartPoint inverse(const AmbientPoint& x) const;
  MetricResult metric_log_det(const ChartPoint& u) const;
  Matrix jacobian(const ChartPoint& u) const;

private:
  std::vector<Chart> components_;
  int intrinsic_dim_ = 0;
  int ambient_dim_ = 0;
};

/// Value-semantic chart: one of the concrete chart kinds.
class Chart {
public:
  using Variant = std::variant<StereographicChart, EuclideanChart, ProductChart>;

  Chart(StereographicChart c) : impl_(std::move(c)) {}
  Chart(EuclideanChart c) : impl_(std::move(c)) {}
  Chart(ProductChart c) : impl_(std::move(c)) {}

  static Chart sphere(int n) { return Chart(StereographicChart(n)); }
  static Chart euclidean(int n) { return Chart(EuclideanChart(n)); }
  /// T^k as the product of k circle charts.
  static Chart torus(int k) {
    return Chart(ProductChart(std::vector<Chart>(static_cast<std::size_t>(k), sphere(1))));
  }

  const Variant& variant() const { return impl_; }

  int intrinsic_dim() const {
    return std::visit([](const auto& c) { return c.intrinsic_dim(); }, impl_);
  }
  int ambient_dim() const {
    return std::visit([](const auto& c) { return c.ambient_dim(); }, impl_);
  }

  AmbientPoint forward(const ChartPoint& u) const {
    return std::visit([&](const auto& c) { return c.forward(u); }, impl_);
  }
  ChartPoint inverse(const AmbientPoint& x) const {
    return std::visit([&](const auto& c) { return c.inverse(x); }, impl_);
  }
  MetricResult metric_log_det(const ChartPoint& u) const {
    return std::visit([&](const auto& c) { return c.metric_log_det(u); }, impl_);
  }
  Matrix jacobian(const ChartPoint& u) const {
    return std::visit([&](const auto& c) { return c.jacobian(u); }, impl_);
  }

  /// Central-difference Jacobian of forward at u (m×n, column j = ∂φ/∂u_j).
  Matrix numeric_jacobian(const ChartPoint& u, double h = kDefaultJacobianStep) const {
    if (u.size() != intrinsic_dim()) {
      throw ContractViolation("numeric_jacobian: chart point has wrong dimension");
    }
    return central_difference_jacobian([this](const Vector& p) { return forward(p); }, u, h);
  }

  /// log det(J_numᵀ J_num) from the finite-difference Jacobian.
  MetricResult metric_log_det_numeric(const ChartPoint& u, double h = kDefaultJacobianStep) const {
    const Matrix jac = numeric_jacobian(u, h);
    const Matrix gram = jac.transpose() * jac;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw DegenerateMetric("numeric metric JᵀJ is not positive definite");
    }
    const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      if (!(diag[i] > 0.0)) throw DegenerateMetric("numeric metric has a zero pivot");
      log_det += 2.0 * std::log(diag[i]);
    }
    if (!std::isfinite(log_det)) throw DegenerateMetric("numeric metric determinant is not finite");
    return {log_det};
  }

  /// True when every factor is a sphere chart (S^n, or a product of spheres such as T^k).
  bool is_compact() const {
    return std::visit(
        [](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, StereographicChart>) {
            return true;
          } else if constexpr (std::is_same_v<T, EuclideanChart>) {
            return false;
          } else {
            for (const auto& part : c.components()) {
              if (!part.is_compact()) return false;
            }
            return true;
          }
        },
        impl_);
  }

private:
  Variant impl_;
};

inline ProductChart::ProductChart(std::vector<Chart> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ContractViolation("product chart needs at least one component");
  for (const auto& c : components_) {
    intrinsic_dim_ += c.intrinsic_dim();
    ambient_dim_ += c.ambient_dim();
  }
}

inline AmbientPoint ProductChart::forward(const ChartPoint& u) const {
  if (u.size() != intrinsic_dim_) {
    throw ContractViolation("product chart point has dim " + std::to_string(u.size()) +
                            ", chart expects " + std::to_string(intrinsic_dim_));
  }
  AmbientPoint x(ambient_dim_);
  Eigen::Index ui = 0;
  Eigen::Index xi = 0;
  for (const auto& c : components_) {
    const int n = c.intrinsic_dim();
    const int m = c.ambient_dim();
    x.segment(xi, m) = c.forward(u.segment(ui, n));
    ui += n;
    xi += m;
  }
  return x;
}

inline ChartPoint ProductChart::inverse(const AmbientPoint& x) const {
  if (x.size() != ambient_dim_) {
    throw ContractViolation("product ambient point has dim " + std::to_string(x.size()) +
                            ", chart expects " + std::to_string(ambient_dim_));
  }
  ChartPoint u(intrinsic_dim_);
  Eigen::Index ui = 0;
  Eigen::Index xi = 0;
  for (const auto& c : components_) {
    const int n = c.intrinsic_dim();
    const int m = c.ambient_dim();
    u.segment(ui, n) = c.inverse(x.segment(xi, m));
    ui += n;
    xi += m;
  }
  return u;
}

inline MetricResult ProductChart::metric_log_det(const ChartPoint& u) const {
  if (u.size() != intrinsic_dim_) {
    throw ContractViolation("product chart point has dim " + std::to_string(u.size()) +
                            ", chart expects " + std::to_string(intrinsic_dim_));
  }
  double total = 0.0;
  Eigen::Index ui = 0;
  for (const auto& c : components_) {
    const int n = c.intrinsic_dim();
    total += c.metric_log_det(u.segment(ui, n)).log_det_g;
    ui += n;
  }
  return {total};
}

inline Matrix ProductChart::jacobian(const ChartPoint& u) const {
  if (u.size() != intrinsic_dim_) {
    throw ContractViolation("product chart point has wrong dimension");
  }
  Matrix jac = Matrix::Zero(ambient_dim_, intrinsic_dim_);
  Eigen::Index ui = 0;
  Eigen::Index xi = 0;
  for (const auto& c : components_) {
    const int n = c.intrinsic_dim();
    const int m = c.ambient_dim();
    jac.block(xi, ui, m, n) = c.jacobian(u.segment(ui, n));
    ui += n;
    xi += m;
  }
  return jac;
}

/// Volume of the manifold covered by a compact chart (product of sphere areas).
inline double manifold_volume(const Chart& chart) {
  return std::visit(
      [](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, StereographicChart>) {
          return sphere_volume(c.intrinsic_dim());
        } else if constexpr (std::is_same_v<T, EuclideanChart>) {
          throw ContractViolation("euclidean factor has infinite volume");
        } else {
          double v = 1.0;
          for (const auto& part : c.components()) v *= manifold_volume(part);
          return v;
        }
      },
      chart.variant());
}

}  // namespace manifold_flow
