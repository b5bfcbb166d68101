#pragma once

// Command-line front end: gen-phantom, train, infer, eval.

#include <iosfwd>

namespace m2t {

/// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
/// 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace m2t
