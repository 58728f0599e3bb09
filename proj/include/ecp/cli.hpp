#pragma once

#include <iosfwd>

namespace ecp::cli {

/// Exit codes of the `ecp` tool.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,       // bad or missing flags, invalid numeric arguments
  kFormat = 2,      // unreadable, malformed or inconsistent input files
  kDegenerate = 3,  // the data cannot support the requested fit or statistic
};

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ecp::cli
