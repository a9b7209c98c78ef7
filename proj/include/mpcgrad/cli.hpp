#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mpcgrad {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumerical = 3 };

/**
 * Entry point of the `mpcgrad` tool. `args` excludes the program name.
 * Subcommands: cinf, sample, gen, train, eval, experiment.
 */
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mpcgrad
