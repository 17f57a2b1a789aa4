#include "ltr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "ltr/eval_harness.hpp"

namespace fs = std::filesystem;

namespace ltr::cli {

Subcommand subcommand_from_string(const std::string& name) {
  if (name == "datastats") return Subcommand::DataStats;
  if (name == "train") return Subcommand::Train;
  if (name == "evaluate") return Subcommand::Evaluate;
  if (name == "gridsearch") return Subcommand::GridSearch;
  if (name == "masksweep") return Subcommand::MaskSweep;
  throw ConfigError("unknown subcommand \"" + name +
                    "\"; valid: datastats, train, evaluate, gridsearch, masksweep");
}

namespace {

std::string resolve_out_dir(const CliInvocation& inv, const ResolvedConfig& cfg) {
  if (!inv.out_dir.empty()) return inv.out_dir;
  if (!cfg.out_dir.empty() && cfg.out_dir != "out") return cfg.out_dir;
  if (const char* env = std::getenv("LTR_OUT_DIR"); env && *env) return env;
  return cfg.out_dir;
}

void print_datastats(std::ostream& out, const data::Dataset& ds) {
  int min_docs = ds.groups.front().num_docs();
  int max_docs = min_docs;
  long total = 0;
  std::map<Scalar, int> histogram;
  for (const data::QueryGroup& g : ds.groups) {
    const int m = g.num_docs();
    min_docs = std::min(min_docs, m);
    max_docs = std::max(max_docs, m);
    total += m;
    for (int i = 0; i < m; ++i) histogram[g.labels[i]] += 1;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(total) / ds.num_queries());
  out << ds.num_queries() << " queries, " << total << " documents (min " << min_docs << ", mean "
      << buf << ", max " << max_docs << " per query), d=" << ds.feature_dim << "\n";
  out << "labels {";
  bool first = true;
  for (const auto& [label, count] : histogram) {
    if (!first) out << ", ";
    first = false;
    std::snprintf(buf, sizeof(buf), "%g", label);
    out << buf << ":" << count;
  }
  out << "}\n";
}

int run_evaluate(const ResolvedConfig& cfg, const data::Dataset& dataset,
                 const std::string& out_dir, std::ostream& out) {
  if (cfg.checkpoint_path.empty())
    throw ConfigError("evaluate needs evaluate.checkpoint set to a checkpoint path");
  auto [net, adam] = nn::load_checkpoint(cfg.checkpoint_path);
  if (net.input_dim() != dataset.feature_dim)
    throw ConfigError("checkpoint input dim does not match dataset feature dim");

  metrics::EvalOptions opt;
  opt.cutoffs = cfg.experiment.cutoffs;
  opt.relevance_threshold = cfg.experiment.relevance_threshold;
  opt.label_max = std::max<Scalar>(1.0, dataset.label_max);
  opt.exclude_zero_relevance = cfg.experiment.exclude_zero_relevance;

  nn::ScoringNet eval_net = net;
  eval_net.mode = nn::Mode::Eval;
  std::vector<int> all(dataset.num_queries());
  for (int i = 0; i < dataset.num_queries(); ++i) all[i] = i;
  const metrics::MetricReport report = metrics::evaluate_groups(
      [&eval_net](const data::QueryGroup& g) { return nn::forward(eval_net, g.features); },
      dataset, all, opt);

  std::ofstream os(out_dir + "/eval_metrics.csv");
  metrics::write_report_csv(os, report, "-", "eval");
  metrics::write_report_csv(out, report, "-", "eval");
  return kExitOk;
}

}  // namespace

int run_command(const CliInvocation& inv, std::ostream& out) {
  harness::reset_cancel();
  ResolvedConfig cfg;
  try {
    cfg = parse_config(inv.config_path, inv.overrides);
  } catch (const std::exception& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  const std::string out_dir = resolve_out_dir(inv, cfg);
  std::ofstream log;
  try {
    fs::create_directories(out_dir);
    log.open(out_dir + "/run.log", std::ios::app);

    // Reproducibility echo: the resolved config reparses to itself.
    std::ofstream echo(out_dir + "/resolved_config.json");
    echo << cfg.resolved_json;

    const data::Dataset dataset = harness::load_prepared_dataset(cfg.experiment);

    switch (inv.subcommand) {
      case Subcommand::DataStats: {
        print_datastats(out, dataset);
        return kExitOk;
      }
      case Subcommand::Train: {
        const harness::CvResult result =
            harness::run_cross_validation(cfg.experiment, dataset, out_dir);
        if (inv.verbosity >= 0) {
          out << "run " << harness::config_hash(cfg.experiment) << " ("
              << harness::config_label(cfg.experiment) << ")\n";
          metrics::write_report_csv(out, result.fold_mean, "mean",
                                    cfg.experiment.framework == harness::Framework::Adversarial
                                        ? "test_discriminator"
                                        : "test");
        }
        for (std::size_t f = 0; f < result.folds.size(); ++f) {
          if (result.folds[f].failed) {
            out << "fold " << f << " FAILED: " << result.folds[f].error << "\n";
            log << "fold " << f << " FAILED: " << result.folds[f].error << "\n";
          }
        }
        return result.any_failed ? kExitPartialFailure : kExitOk;
      }
      case Subcommand::Evaluate:
        return run_evaluate(cfg, dataset, out_dir, out);
      case Subcommand::GridSearch: {
        const auto rows = harness::grid_search(cfg.grid, cfg.experiment, dataset, out_dir);
        bool any_failed = false;
        char buf[32];
        for (std::size_t r = 0; r < rows.size(); ++r) {
          std::snprintf(buf, sizeof(buf), "%.6f", rows[r].selection_value);
          if (inv.verbosity >= 0)
            out << (r + 1) << ". " << rows[r].label << " selection_ndcg@5=" << buf
                << (r == 0 ? "  <- best" : "") << "\n";
          any_failed = any_failed || rows[r].result.any_failed;
        }
        return any_failed ? kExitPartialFailure : kExitOk;
      }
      case Subcommand::MaskSweep: {
        const auto rows = harness::mask_sweep(cfg.mask_ratios, cfg.experiment, dataset, out_dir);
        char buf[64];
        for (const auto& row : rows) {
          std::snprintf(buf, sizeof(buf), "ratio %g: ndcg@1 %.6f", row.ratio, row.ndcg1);
          if (inv.verbosity >= 0) out << buf << "\n";
        }
        return kExitOk;
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    out << "config error: " << e.what() << "\n";
    if (log.is_open()) log << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ParseError& e) {
    out << "parse error: " << e.what() << "\n";
    if (log.is_open()) log << "parse error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    if (log.is_open()) log << "error: " << e.what() << "\n";
    return kExitPartialFailure;
  }
}

}  // namespace ltr::cli
