#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reach/config.hpp"

namespace reach {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootVar = "REACHBENCH_OUT";

/// Config file layered with "section.key=value" overrides, in order.
Config layered_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Output directory for a subcommand: the explicit flag if given, else
/// $REACHBENCH_OUT/<subcommand>, else runs/<subcommand>.
std::filesystem::path default_output(const std::string& subcommand, const std::string& flag);

/// Entry point of the `reachbench` tool. Errors are written to `err` as one
/// JSON object per line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace reach
