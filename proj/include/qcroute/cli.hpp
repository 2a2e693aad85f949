#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qcroute::cli {

// Runs one CLI invocation. `args` excludes the program name. Exit codes:
// 0 success, 1 usage, 2 data/validation failure, 3 infeasible or degenerate
// computation. Machine-readable results go to `out`, diagnostics to `err`;
// files are written atomically so a nonzero exit leaves no partial output.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qcroute::cli
