#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmem {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitPartialInput = 2, kExitRuntime = 3 };

// Runs one command line (without the program name) in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmem
