#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rsts::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitEstimation = 1;
inline constexpr int kExitInput = 2;

inline constexpr const char* kVersion = "0.1.0";

// Entry point for the `rsts` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rsts::cli
