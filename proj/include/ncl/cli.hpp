#pragma once

// Command-line front end. run_cli is the whole program minus process exit, so
// tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace ncl {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ncl
