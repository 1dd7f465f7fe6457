#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace manifold_flow {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (dimension mismatch, non-finite input, bad parameter).
class ContractViolation : public Error {
public:
  using Error::Error;
};

/// An ambient point is not on the chart's manifold within tolerance.
class OffManifold : public Error {
public:
  using Error::Error;
};

/// An ambient point lies at (or within tolerance of) the excluded point of a chart.
class ChartSingularity : public Error {
public:
  using Error::Error;
};

/// A numerically computed metric JᵀJ is not positive definite.
class DegenerateMetric : public Error {
public:
  using Error::Error;
};

/// A numerically computed flow Jacobian is singular.
class DegenerateFlow : public Error {
public:
  using Error::Error;
};

/// A density was requested in a direction that would need a flow inverse.
class NonInvertibleFlow : public Error {
public:
  using Error::Error;
};

/// An objective or density evaluated to a non-finite value.
class NumericalFailure : public Error {
public:
  using Error::Error;
};

/// Malformed or inconsistent model / fit configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// One or more rows of an input data set failed validation.
class DataValidation : public Error {
public:
  struct Row {
    std::size_t index;
    std::string reason;
  };

  explicit DataValidation(std::vector<Row> rows)
      : Error(summarize(rows)), rows_(std::move(rows)) {}

  const std::vector<Row>& rows() const noexcept { return rows_; }

private:
  static std::string summarize(const std::vector<Row>& rows) {
    std::string msg = std::to_string(rows.size()) + " invalid row(s):";
    std::size_t shown = 0;
    for (const auto& r : rows) {
      if (shown++ == 10) {
        msg += " ...";
        break;
      }
      msg += " [" + std::to_string(r.index) + ": " + r.reason + "]";
    }
    return msg;
  }

  std::vector<Row> rows_;
};

}  // namespace manifold_flow
