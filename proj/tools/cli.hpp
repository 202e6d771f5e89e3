#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace catbond::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kIoError = 2, kInvariantError = 3 };

// Runs the command line `args` (without the program name). Diagnostics go to
// `err`, human-readable summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace catbond::cli
