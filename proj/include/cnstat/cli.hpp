#pragma once

// Command-line dispatcher. Implemented in src/cli.cpp (the only compiled
// translation unit of the project besides the tools and tests).

#include <iosfwd>

namespace cnstat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. Reports go to `out`, diagnostics to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cnstat::cli
