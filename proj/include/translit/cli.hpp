#pragma once

#include <iosfwd>

namespace translit::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kFailure = 4 };

/// Entry point of the `translit` tool: train, convert, eval, sweep.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace translit::cli
