#pragma once

#include <string>
#include <vector>

#include "psomerge/config.hpp"

namespace psomerge::cli {

// Subcommands; each returns a process exit code (0 iff every requested
// artifact was fully written).
int cmd_merge(const Config& config);
int cmd_pso(const Config& config);
int cmd_eval(const Config& config);
int cmd_bench_synthetic(const Config& config);

// Full argv entry point: psomerge <command> [--config <path>] [--seed N]
// [--out-dir DIR] [--dotted.key=value ...]
int run(const std::vector<std::string>& args);

}  // namespace psomerge::cli
