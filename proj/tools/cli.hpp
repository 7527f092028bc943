#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowlab::cli {

/// Exit codes: 0 success, 1 invalid input, 2 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Invariant suite behind `flowlab selftest`; returns the number of failures.
int selftest(bool quick, std::ostream& out);

}  // namespace flowlab::cli
