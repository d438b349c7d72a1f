#pragma once

#include <iosfwd>

namespace amtgan::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDivergence = 3,
};

// Entry point of the `amtgan` tool: train, protect, evaluate, calibrate.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace amtgan::cli
