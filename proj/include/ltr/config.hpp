#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ltr/eval_harness.hpp"

namespace ltr::cli {

struct ResolvedConfig {
  harness::ExperimentConfig experiment;
  harness::GridSpec grid;
  std::vector<Scalar> mask_ratios;
  std::string checkpoint_path;  // evaluate subcommand
  std::string out_dir = "out";
  std::string resolved_json;  // canonical echo, reparses to itself
};

// Loads the JSON config (empty path = all defaults), validates keys and
// value ranges, applies dotted-key overrides last. Unknown keys, enum typos
// and out-of-range values raise ConfigError naming the key.
ResolvedConfig parse_config(const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Same, from config text (tests and the resolved-config echo).
ResolvedConfig parse_config_text(const std::string& json_text,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace ltr::cli
