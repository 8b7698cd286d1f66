#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ovrp {

/// Exit statuses of the command-line driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitNotConverged = 2;

/// Subcommands: fit, sensitivity, simulate, check, bvn-selftest.
/// Errors go to `err` as one JSON object {"error": {"code", "message"}}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ovrp
