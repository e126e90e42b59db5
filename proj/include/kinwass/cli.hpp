#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kinwass {

// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfigError = 2 };

// args[0] is the program name. Reports go to out, diagnostics and usage to err.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kinwass
