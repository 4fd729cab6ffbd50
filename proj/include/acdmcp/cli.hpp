#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace acdmcp::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // invalid config, failed cell, unreadable input
inline constexpr int kUsage = 2;    // bad command line

// Entry point shared by the binary and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace acdmcp::cli
