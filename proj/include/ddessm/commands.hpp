#pragma once

// Pipelines behind the command-line subcommands. Each writes its files into
// the output directory and returns a plain-text report.

#include <optional>
#include <string>
#include <vector>

#include "ddessm/config.hpp"

namespace ddessm {

struct CommandOptions {
    std::optional<std::string> out_dir;
    std::optional<int> order;
    std::optional<int> grid_n;
    bool validate = false;
    int threads = 1;
};

struct CommandResult {
    std::string report;
    std::vector<std::string> files;
    std::vector<std::string> warnings;
};

CommandResult cmd_spectrum(const RunConfig& cfg, const CommandOptions& opts);
CommandResult cmd_ssm(const RunConfig& cfg, const CommandOptions& opts);
CommandResult cmd_predict(const RunConfig& cfg, const CommandOptions& opts);
CommandResult cmd_simulate(const RunConfig& cfg, const CommandOptions& opts);

/// Dispatch by name: spectrum | ssm | predict | simulate.
CommandResult run_command(const std::string& name, const RunConfig& cfg, const CommandOptions& opts);

}  // namespace ddessm
