#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bfgpu::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kConfigError = 1,
    kDataError = 2,
    kTrainingFailure = 3,
};

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bfgpu::cli
