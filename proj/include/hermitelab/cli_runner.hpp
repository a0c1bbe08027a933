#pragma once

// Subcommand dispatch and result persistence for the hermitelab tool.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hermitelab/config.hpp"
#include "hermitelab/experiments.hpp"

namespace hermitelab {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kExitPass = 0, kExitTestFailure = 1, kExitConfigError = 2, kExitNumericError = 3 };

const std::vector<std::string>& subcommands();

/// Runs one experiment for a parsed config and returns its report.
TestReport run_experiment(const std::string& subcommand, const ExperimentConfig& cfg);

/// Writes <out>/<subcommand>.csv and <subcommand>.json. Wall-clock time goes to
/// <subcommand>.timing.json so the first two files are reproducible byte for byte.
void write_outputs(const std::filesystem::path& out_dir, const std::string& subcommand,
                   const ExperimentConfig& cfg, const TestReport& report, double wall_seconds);

struct RunRequest {
  std::string subcommand;
  std::filesystem::path config_path;
  std::filesystem::path out_dir = ".";
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
};

/// Full CLI run: load, override, execute, persist. Diagnostics go to `err`.
int run(const RunRequest& request, std::ostream& out, std::ostream& err);

}  // namespace hermitelab
