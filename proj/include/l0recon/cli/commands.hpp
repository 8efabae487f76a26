#pragma once

#include <ostream>

namespace l0recon::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,  // also bad command-line usage
  kIoError = 3,
  kNotConverged = 4,
};

/// Entry point of the `l0recon` tool. Log lines go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace l0recon::cli
