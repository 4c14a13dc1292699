#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fedrc::app {

enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_config = 2,
    exit_numeric = 3,
    exit_io = 4,
};

// Full command line without the program name, e.g. {"train", "--config", "x.ini"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedrc::app
