#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ecgbench::cli {

// Runs one command line (without the program name). Returns the exit code:
// 0 ok, 1 runtime or data error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecgbench::cli
