#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lmc/experiment.hpp"

namespace lmc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct CommandOptions {
  std::filesystem::path out;  // results root; empty uses the config's output
  int jobs = 1;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::string axis;  // sweep only: "" (both lists), "batch" or "lr"
};

/// Applies command-line overrides and re-validates.
ExperimentConfig with_overrides(ExperimentConfig config, const CommandOptions& options);
std::filesystem::path results_root(const ExperimentConfig& config, const CommandOptions& options);

void cmd_train(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
void cmd_interpolate(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
void cmd_sweep(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
void cmd_ensemble(const ExperimentConfig& config, const CommandOptions& options, std::ostream& log);
/// Renders SVG plots and summary.md into <root>/report from CSV files only.
void cmd_report(const std::filesystem::path& root, std::ostream& log);
/// Recomputes manifest hashes; false when any file is missing or changed.
bool cmd_verify(const std::filesystem::path& root, std::ostream& log);

/// Full command line (without the program name); returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lmc
