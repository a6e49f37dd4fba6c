#pragma once

#include <string>
#include <vector>

namespace mambadm {

// Entry point shared by the binary and the tests. `args` excludes argv[0].
// Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 training
// failure (including failed sweep legs).
int run_cli(std::vector<std::string> args);

}  // namespace mambadm
