#include <vector>

#include "headlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return headlab::run_subcommand(args);
}
