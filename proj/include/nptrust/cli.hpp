// Command-line front end: train, eval and sweep subcommands.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nptrust {

/// Runs the command line `args` (program name first) and returns the exit
/// status: 0 on success, 1 on a failed run, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// Directory searched for named configs such as "dr3_discrete".
std::string config_dir();

}  // namespace nptrust
