#pragma once

#include <iosfwd>

namespace mjscc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification failure or divergence
inline constexpr int kExitUsage = 2;    // bad flags or config
inline constexpr int kExitIo = 3;       // unreadable/unwritable or malformed files

/// Entry point of the `mjscc` tool. Reports go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mjscc::cli
