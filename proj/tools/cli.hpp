#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace forge::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;      // runtime failure, or validate found a failing check
inline constexpr int kBadInput = 2;     // unreadable or malformed input, bad arguments
inline constexpr int kJointMismatch = 3;

/// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
