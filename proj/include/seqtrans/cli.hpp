#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace seqtrans::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

// Runs the `seqtrans` command line. `args` excludes the program name.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqtrans::cli
