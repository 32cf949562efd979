#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace diagt::cli {

/// Runs the command line `args` (args[0] is the program name). Returns the
/// process exit code: 0 on success, 1 on runtime failure, 2 on bad usage.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace diagt::cli
