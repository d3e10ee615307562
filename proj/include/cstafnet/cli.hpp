#pragma once

#include <string>

namespace cstafnet {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes returned by run_cli.
enum ExitCode : int {
  kExitOk = 0,
  kExitSelfcheckFailed = 1,
  kExitConfig = 2,
  kExitInputData = 3,
  kExitDivergence = 4,
};

int run_cli(int argc, char** argv);

}  // namespace cstafnet
