#pragma once

#include <ostream>

namespace certifair::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnfair = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitResource = 3;

/// Parses `argv` (argv[0] is the program name) and runs one subcommand:
/// train, certify, verify-local or eval.  Documented output goes to `out`,
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace certifair::cli
