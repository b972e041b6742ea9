#pragma once

#include <string>
#include <vector>

namespace risa::cli {

// Full command-line surface; returns the process exit code. Errors print a
// one-line diagnostic on stderr and yield a nonzero code.
int run(const std::vector<std::string>& args);

}  // namespace risa::cli
