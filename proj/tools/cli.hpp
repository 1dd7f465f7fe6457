#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace manifold_flow::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int {
  kPass = 0,
  kThresholdFail = 1,
  kConfigError = 2,
  kNumericalFailure = 3,
  kDataValidation = 4,
};

/// Runs `manifold-flow` with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace manifold_flow::cli
