#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mminr {

// Exit codes returned by run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // unclassified runtime failure (I/O, ...)
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitShape = 5;
inline constexpr int kExitTraining = 6;

/// Entry point for `mminr <command> [flags]`; `args` excludes the program name.
/// Errors are written to `err` as a single `error[<kind>]: <message>` line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mminr
