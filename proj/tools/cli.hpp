#pragma once

#include <string>
#include <vector>

namespace cloneforge::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDataError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kNumericalError = 3;

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args);

}  // namespace cloneforge::cli
