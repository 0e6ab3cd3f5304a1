#ifndef HEADLAB_CLI_HPP_
#define HEADLAB_CLI_HPP_

#include <string>
#include <vector>

namespace headlab {

// Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure,
// 5 equivalence-check failure.
int run_subcommand(const std::vector<std::string>& args);

}  // namespace headlab

#endif  // HEADLAB_CLI_HPP_
