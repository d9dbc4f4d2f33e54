#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dcqr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // bad flags, malformed input files, invalid config
inline constexpr int kExitNumeric = 3;  // training or evaluation failed numerically

// Runs one command line (without the program name). Every successful run
// writes <out>.manifest.json next to its main output.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcqr::cli
