#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fcnt {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

/// Name of the per-run manifest written into every output directory.
inline constexpr const char* kRunManifestName = "run.txt";

/// Runs one subcommand (generate, train, segment, unsup, eval, replay).
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fcnt
