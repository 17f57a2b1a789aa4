#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltr/cli.hpp"
#include "ltr/eval_harness.hpp"

namespace {

void handle_sigint(int) { ltr::harness::request_cancel(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural learning-to-rank toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  long long seed = -1;
  int workers = 0;
  bool verbose = false;
  bool quiet = false;

  const std::vector<std::string> names = {"datastats", "train", "evaluate", "gridsearch",
                                          "masksweep"};
  const std::vector<std::string> descriptions = {
      "print query/document/label statistics for the configured dataset",
      "cross-validated training run; writes runs/<hash>/ artifacts and summary.csv",
      "score a dataset with a saved checkpoint and report metrics",
      "exhaustive hyperparameter grid; writes grid.csv",
      "masking-ratio sweep; writes masksweep.csv"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descriptions[i]);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", sets, "override a config key, dotted path: key.path=value")
        ->take_all();
    sub->add_option("--out", out_dir, "output directory (env LTR_OUT_DIR is the fallback)");
    sub->add_option("--seed", seed, "top-level seed (shorthand for --set seed=N)");
    sub->add_option("--workers", workers, "parallel fold workers (shorthand for --set workers=N)");
    sub->add_flag("-v,--verbose", verbose, "verbose output");
    sub->add_flag("-q,--quiet", quiet, "suppress normal output");
  }

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, handle_sigint);

  ltr::cli::CliInvocation inv;
  try {
    inv.subcommand = ltr::cli::subcommand_from_string(app.get_subcommands().front()->get_name());
    inv.config_path = config_path;
    inv.out_dir = out_dir;
    inv.verbosity = quiet ? -1 : (verbose ? 1 : 0);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "--set expects key.path=value, got \"" << s << "\"\n";
        return ltr::cli::kExitConfigError;
      }
      inv.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed >= 0) inv.overrides.emplace_back("seed", std::to_string(seed));
    if (workers > 0) inv.overrides.emplace_back("workers", std::to_string(workers));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return ltr::cli::kExitConfigError;
  }

  return ltr::cli::run_command(inv, std::cout);
}
