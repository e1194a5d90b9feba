#pragma once

#include <iosfwd>

namespace meco::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kConfigError = 3,
    kServiceError = 4,
};

/// Entry point of the `meco` tool. Writes results to `out` and
/// diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace meco::cli
