// asyncred command-line front end. Kept as a library so tests can drive it
// in process.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asyncred::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDiverged = 3,
  kVerifyFailed = 4,
};

/// argv[0] is the program name. Output and diagnostics go to the streams.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asyncred::cli
