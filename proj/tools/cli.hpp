#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nvdeer::cli {

inline constexpr const char* tool_version = "0.1.0";

enum ExitCode : int {
  exit_ok = 0,
  exit_config_error = 2,
  exit_infeasible = 3,
};

// Runs one subcommand. `args` excludes the program name. Diagnostics go to
// `err`, help text to `out`; results are written to the --out path.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nvdeer::cli
