#pragma once

#include <iosfwd>

namespace engage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDiverged = 3;

// argv[0] is the program name. Diagnostics go to err, results and help to out.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace engage::cli
