#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace normgraph::cli {

/// Runs the command line `args` (without the program name). Returns the
/// process exit code: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace normgraph::cli
