#pragma once

#include <string>
#include <vector>

namespace nest::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kBudgetError = 4,
};

// Runs the command line `args` (without the program name) and returns the
// process exit code. Errors are printed to stderr as one JSON object.
int run(const std::vector<std::string>& args);

}  // namespace nest::cli
