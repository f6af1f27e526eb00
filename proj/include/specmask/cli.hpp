#pragma once

#include <string>
#include <vector>

namespace specmask {

/// Runs one CLI invocation (arguments without the program name) and returns
/// the process exit code: 0 ok, 1 assertion/runtime failure, 2 usage error.
int cli_run(std::vector<std::string> args);

}  // namespace specmask
