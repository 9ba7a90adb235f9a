#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xrm::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 usage or validation failure, 2 I/O or transport
// failure. argv excludes the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace xrm::cli
