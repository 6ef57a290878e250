#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crplus::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Runs the `crplus` command line (`dist`, `cond`, `mc`, `compare`) and returns the
/// process exit code: 0 success, 2 input or validation error, 3 numerical tolerance failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);

}  // namespace crplus::cli
