#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cardiosep::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kSuccess = 0,
    kUsage = 1,
    kValidation = 2,
    kIo = 3,
    kNumeric = 4,
};

/// Runs the command line `args` (args[0] is the program name). Human output
/// goes to `out`; logs and one-line `error[...]` messages go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cardiosep::cli
