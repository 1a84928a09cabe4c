#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mamkl::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kNumericError = 4 };

// Runs one `mamkl` invocation; args[0] is the program name.
// Runs one subcommand; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mamkl::cli
