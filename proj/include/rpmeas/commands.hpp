#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace rpmeas {

inline constexpr const char* kToolName = "rpmeas";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailed = 1,          // a self-test or report check failed
  kExitConfigError = 2,
  kExitNonConvergence = 3,
  kExitDivergence = 4,
};

struct RunOptions {
  std::string out_dir;      // overrides output.dir when nonempty
  std::string mode = "both";  // respond: direct, fdt or both
  bool quiet = false;
  std::ostream* log = nullptr;  // std::cerr when null
};

// Runs check, pullback, measure, respond or oracle on a config document (or a meta.json
// of an earlier run) and returns the exit code. Every run writes meta.json next to its
// outputs; errors are reported on the log stream.
int run_command(const std::string& command, const nlohmann::json& doc, const RunOptions& options = {});

}  // namespace rpmeas
