#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aissm {

// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitVerification = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitCheckpoint = 4,
    kExitMissing = 5,
};

// Runs the command line (args excludes the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aissm
