#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "medfact/error.hpp"

namespace medfact {

// Exit codes: 0 success, 1 configuration or usage error, 2 run-time failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

int exit_code_for(ErrorCode code);

// Entry point behind the medfact executable. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Markdown reference of every subcommand, flag and config key.
std::string cli_reference();

}  // namespace medfact
