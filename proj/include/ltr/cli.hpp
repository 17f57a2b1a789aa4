#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ltr/config.hpp"

namespace ltr::cli {

enum class Subcommand { DataStats, Train, Evaluate, GridSearch, MaskSweep };

Subcommand subcommand_from_string(const std::string& name);

struct CliInvocation {
  Subcommand subcommand = Subcommand::DataStats;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;  // dotted key = value
  std::string out_dir;  // --out beats config beats $LTR_OUT_DIR
  int verbosity = 0;    // -1 quiet, 0 normal, 1 verbose
};

// Exit statuses: 0 success, 1 partial fold failure, 2 config/parse error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

// Dispatches one invocation: parses the config, echoes the resolved config
// into the output directory, runs the subcommand, and writes artifacts plus
// run.log there. Messages go to `out`.
int run_command(const CliInvocation& invocation, std::ostream& out);

}  // namespace ltr::cli
