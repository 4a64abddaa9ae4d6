#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fibham::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInconclusive = 2;

// start:stop:step with inclusive endpoints (within 1e-12), or a comma list.
std::vector<double> parse_grid(const std::string& spec);

// Worker count from FIBHAM_THREADS (default 1).
int thread_count();

// Runs one command line (args exclude the program name). Data goes to `out`
// unless --output is given; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fibham::cli
