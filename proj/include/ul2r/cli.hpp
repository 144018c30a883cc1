#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ul2r {

inline constexpr const char* kToolVersion = "0.1.0";

// Entry point of the `ul2r` executable; args excludes the program name.
// Returns 0 on success, 1 on validation failure, 2 on usage errors. Failures
// print one line "error: <code>: <message>" to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ul2r
