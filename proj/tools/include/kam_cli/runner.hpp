#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "kam_cli/config.hpp"

namespace kam::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitThreshold = 2,
  kExitNumerical = 3,
  kExitConfig = 4,
};

struct Outcome {
  int exit_code = kExitOk;
  std::string message;     // one line summary
  std::string inequality;  // binding inequality on exit 2
};

/// Runs `config` and writes its artifacts under `out_dir`:
///   config.json       effective configuration
///   manifest.json     schema kam-manifest/1, timestamp in "header"
///   iterations.csv    step and iterate runs
///   scaling.csv and slopes.json for scaling runs, verify.json for verify.
/// Progress and errors go to `log`.
Outcome run(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// Parses the file then runs; configuration errors give exit code 4.
Outcome run_file(const std::filesystem::path& config_path, const std::string& kind_override,
                 const std::string& out_override, bool strict_flag, std::ostream& log);

}  // namespace kam::cli
