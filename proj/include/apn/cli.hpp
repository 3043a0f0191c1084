#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace apn {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // verification or training failure
  kExitConfig = 2,   // bad arguments, configuration, domain or shape errors
  kExitIo = 3,
};

/// Runs the `apn` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace apn
