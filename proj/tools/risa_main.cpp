#include <vector>

#include "risa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return risa::cli::run(args);
}
