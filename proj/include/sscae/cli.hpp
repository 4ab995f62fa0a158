#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sscae::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,     // gradient check failed, or an output could not be written
  kBadFlags = 2,
  kBadData = 3,
  kDiverged = 4,
};

/// Subcommands: train, gradcheck, export, reconstruct. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace sscae::cli
