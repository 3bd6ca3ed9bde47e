#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cxr::cli {

// Runs `cxrens <args...>` (args exclude the program name). Returns the exit
// code: 0 on success, 1 when a stage fails, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cxr::cli
