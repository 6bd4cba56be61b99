#pragma once

#include <string>
#include <vector>

namespace sm::cli {

// Entry point behind the stylemill binary. Returns the process exit code;
// failures print a one-line diagnostic to stderr.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace sm::cli
