#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ukd::cli {

/// Runs one `ukd` invocation. `args` excludes the program name. Results go
/// to `out` as JSON (or to --json PATH); progress and errors go to `err`.
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ukd::cli
