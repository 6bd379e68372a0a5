#pragma once

#include <string>
#include <vector>

namespace ream::cli {

// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace ream::cli
