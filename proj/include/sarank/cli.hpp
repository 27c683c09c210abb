#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sarank {

// Exit codes of the lab tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitVerification = 5;

// Runs `lab <args...>` in-process. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sarank
