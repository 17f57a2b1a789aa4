#include "ltr/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace ltr::harness {

namespace {

std::atomic<bool> g_cancel{false};

void run_parallel(int workers, int num_tasks, const std::function<void(int)>& fn) {
  if (workers <= 1 || num_tasks <= 1) {
    for (int t = 0; t < num_tasks; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      const int t = next.fetch_add(1);
      if (t >= num_tasks) break;
      fn(t);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min(workers, num_tasks);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

std::string format_scalar(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void request_cancel() { g_cancel = true; }
bool cancel_requested() { return g_cancel; }
void reset_cancel() { g_cancel = false; }

Normalization normalization_from_string(const std::string& name) {
  if (name == "none") return Normalization::None;
  if (name == "zscore") return Normalization::Zscore;
  if (name == "minmax") return Normalization::MinMax;
  throw ConfigError("unknown normalization \"" + name + "\"; valid: none, zscore, minmax");
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::None: return "none";
    case Normalization::Zscore: return "zscore";
    case Normalization::MinMax: return "minmax";
  }
  return "none";
}

std::string config_label(const ExperimentConfig& c) {
  std::ostringstream os;
  if (c.framework == Framework::Erm) {
    os << "erm:" << erm::to_string(c.erm_spec.kind) << ",sigma=" << format_scalar(c.erm_spec.sigma)
       << ",alpha=" << format_scalar(c.erm_spec.alpha) << ",maskpolicy="
       << (c.erm_spec.masked_label_policy == erm::MaskedLabelPolicy::Zero ? "zero" : "exclude");
  } else {
    os << "adv:k=" << c.adv_spec.k << ",T=" << format_scalar(c.adv_spec.temperature)
       << ",S=" << c.adv_spec.samples_per_query << ",gd=" << c.adv_spec.g_steps << ":"
       << c.adv_spec.d_steps;
  }
  os << "|net=" << c.net.layers << "x" << c.net.hidden << "," << nn::to_string(c.net.activation)
     << ",bn=" << (c.net.batchnorm ? 1 : 0);
  os << "|opt=lr" << format_scalar(c.lr) << ",l2" << format_scalar(c.l2) << ",ep" << c.epochs;
  os << "|folds=" << c.num_folds << ",seed=" << c.seed << ",mask=" << format_scalar(c.mask_ratio);
  os << "|data=";
  if (c.synthetic.num_queries > 0) {
    os << "synthetic(" << c.synthetic.num_queries << "x" << c.synthetic.docs_per_query << "x"
       << c.synthetic.dim << ",noise=" << format_scalar(c.synthetic.noise) << ")";
  } else {
    os << c.dataset_path;
  }
  os << ",norm=" << to_string(c.normalization) << ",bin=" << (c.binarize ? 1 : 0);
  return os.str();
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string label = config_label(config);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : label) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SyntheticData make_synthetic_dataset(int num_queries, int docs_per_query, int dim, Scalar noise,
                                     std::uint64_t seed) {
  if (num_queries < 1 || docs_per_query < 1 || dim < 1)
    throw ConfigError("synthetic dataset sizes must be positive");

  Rng rng(derive_seed(seed, "synthetic"));
  SyntheticData out;
  out.weight = Vector(dim);
  for (int j = 0; j < dim; ++j) out.weight[j] = rng.normal();
  out.weight /= out.weight.norm();

  out.dataset.feature_dim = dim;
  out.dataset.label_max = 4.0;
  {
    std::ostringstream os;
    os << "synthetic(" << num_queries << "x" << docs_per_query << "x" << dim
       << ",noise=" << format_scalar(noise) << ",seed=" << seed << ")";
    out.dataset.provenance = os.str();
  }

  for (int q = 0; q < num_queries; ++q) {
    data::QueryGroup g;
    g.qid = "q" + std::to_string(q + 1);
    g.features = Matrix(docs_per_query, dim);
    for (int i = 0; i < docs_per_query; ++i) {
      for (int j = 0; j < dim; ++j) g.features(i, j) = rng.normal();
    }
    Vector utility = g.features * out.weight;
    for (int i = 0; i < docs_per_query; ++i) utility[i] += noise * rng.normal();

    // Quantile-bucket the utility into grades 0..4 within the query.
    std::vector<int> order(docs_per_query);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return utility[a] < utility[b]; });
    g.labels = Vector(docs_per_query);
    for (int pos = 0; pos < docs_per_query; ++pos) {
      g.labels[order[pos]] = static_cast<Scalar>((pos * 5) / docs_per_query);
    }
    g.masked = ArrayXb::Constant(docs_per_query, false);

    out.utilities.push_back(std::move(utility));
    out.dataset.groups.push_back(std::move(g));
  }
  return out;
}

data::Dataset load_prepared_dataset(const ExperimentConfig& config) {
  data::Dataset ds;
  if (config.synthetic.num_queries > 0) {
    ds = make_synthetic_dataset(config.synthetic.num_queries, config.synthetic.docs_per_query,
                                config.synthetic.dim, config.synthetic.noise,
                                derive_seed(config.seed, "dataset"))
             .dataset;
  } else {
    if (config.dataset_path.empty())
      throw ConfigError("no dataset: set dataset.path or dataset.synthetic.num_queries");
    ds = data::load_dataset(config.dataset_path, config.feature_dim, config.qid_policy);
  }
  if (config.binarize) ds = data::binarize_labels(ds, config.binarize_threshold);
  if (config.normalization != Normalization::None) {
    for (data::QueryGroup& g : ds.groups) {
      g = config.normalization == Normalization::Zscore ? data::zscore_normalize_query(g)
                                                        : data::minmax_normalize_query(g);
    }
    ds.provenance += "+" + to_string(config.normalization);
  }
  return ds;
}

namespace {

metrics::EvalOptions eval_options(const ExperimentConfig& config, const data::Dataset& dataset) {
  metrics::EvalOptions opt;
  opt.cutoffs = config.cutoffs;
  opt.relevance_threshold = config.relevance_threshold;
  opt.label_max = std::max<Scalar>(1.0, dataset.label_max);
  opt.exclude_zero_relevance = config.exclude_zero_relevance;
  return opt;
}

metrics::MetricReport report_for_net(const nn::ScoringNet& net, const data::Dataset& dataset,
                                     const std::vector<int>& idx,
                                     const metrics::EvalOptions& opt) {
  nn::ScoringNet eval_net = net;
  eval_net.mode = nn::Mode::Eval;
  return metrics::evaluate_groups(
      [&eval_net](const data::QueryGroup& g) { return nn::forward(eval_net, g.features); },
      dataset, idx, opt);
}

// Masks the training split only; validation and test labels stay visible.
data::Dataset mask_train_split(const data::Dataset& dataset, Scalar ratio,
                               const std::vector<int>& train_idx, std::uint64_t mask_seed) {
  if (ratio <= 0.0) return dataset;
  data::Dataset masked = data::apply_random_mask(dataset, ratio, mask_seed);
  std::vector<char> in_train(dataset.groups.size(), 0);
  for (int gi : train_idx) in_train[gi] = 1;
  for (std::size_t g = 0; g < masked.groups.size(); ++g) {
    if (!in_train[g]) masked.groups[g].masked.setConstant(false);
  }
  return masked;
}

FoldResult run_one_fold(const ExperimentConfig& config, const data::Dataset& dataset,
                        const data::FoldAssignment& fold, int fold_index,
                        const std::string& fold_dir) {
  FoldResult result;
  const metrics::EvalOptions opt = eval_options(config, dataset);
  const std::uint64_t mask_seed = derive_seed(config.seed, "mask", fold_index);
  const data::Dataset masked = mask_train_split(dataset, config.mask_ratio, fold.train, mask_seed);

  const std::vector<int> dims =
      nn::mlp_dims(dataset.feature_dim, config.net.layers, config.net.hidden);

  if (config.framework == Framework::Erm) {
    nn::ScoringNet net = nn::make_scoring_net(dims, config.net.activation, config.net.batchnorm,
                                              derive_seed(config.seed, "init", fold_index));
    erm::RankerSpec spec = config.erm_spec;
    spec.seed = derive_seed(config.seed, "train", fold_index);
    erm::TrainOptions topt;
    topt.epochs = config.epochs;
    topt.lr = config.lr;
    topt.l2 = config.l2;
    topt.seed = spec.seed;
    erm::ErmResult trained = erm::train_erm(spec, std::move(net), masked, fold.train, fold.vali, topt);

    result.best_epoch = trained.best_epoch;
    result.selection_value = trained.best_vali_ndcg5;
    result.test_report = report_for_net(trained.best_net, masked, fold.test, opt);

    if (!fold_dir.empty()) {
      std::ofstream log(fold_dir + "/train_log.csv");
      erm::write_train_log_csv(log, trained.log);
      nn::save_checkpoint(fold_dir + "/checkpoint", trained.best_net, trained.best_adam);
      std::ofstream tm(fold_dir + "/test_metrics.csv");
      metrics::write_report_csv(tm, result.test_report, std::to_string(fold_index), "test");
    }
  } else {
    nn::ScoringNet gen = nn::make_scoring_net(dims, config.net.activation, config.net.batchnorm,
                                              derive_seed(config.seed, "init-gen", fold_index));
    nn::ScoringNet disc = nn::make_scoring_net(dims, config.net.activation, config.net.batchnorm,
                                               derive_seed(config.seed, "init-disc", fold_index));
    adv::AdversarialSpec spec = config.adv_spec;
    spec.seed = derive_seed(config.seed, "train", fold_index);
    adv::AdvTrainOptions topt;
    topt.epochs = config.epochs;
    topt.lr = config.lr;
    topt.l2 = config.l2;
    // No validation-based selection for adversarial runs: train on the
    // training split, evaluate the final nets on the test split.
    adv::AdvResult trained =
        adv::train_adversarial(spec, std::move(gen), std::move(disc), masked, fold.train,
                               fold.test, topt);

    result.best_epoch = config.epochs;
    result.test_report = report_for_net(trained.discriminator, masked, fold.test, opt);
    result.generator_report = report_for_net(trained.generator, masked, fold.test, opt);
    if (result.test_report.values.count({"nDCG", 5})) {
      result.selection_value = result.test_report.mean("nDCG", 5);
    } else {
      metrics::EvalOptions sel_opt = opt;
      sel_opt.cutoffs = {5};
      result.selection_value =
          report_for_net(trained.discriminator, masked, fold.test, sel_opt).mean("nDCG", 5);
    }

    if (!fold_dir.empty()) {
      std::ofstream log(fold_dir + "/train_log.csv");
      adv::write_adv_log_csv(log, trained.log);
      nn::save_checkpoint(fold_dir + "/checkpoint", trained.discriminator, trained.disc_adam);
      nn::save_checkpoint(fold_dir + "/checkpoint_generator", trained.generator, trained.gen_adam);
      std::ofstream tm(fold_dir + "/test_metrics.csv");
      metrics::write_report_csv(tm, result.test_report, std::to_string(fold_index),
                                "test_discriminator");
      metrics::write_report_csv(tm, result.generator_report, std::to_string(fold_index),
                                "test_generator", false);
    }
  }
  return result;
}

}  // namespace

CvResult run_cross_validation(const ExperimentConfig& config, const data::Dataset& dataset,
                              const std::string& run_dir) {
  const data::FoldPlan plan =
      data::make_folds(dataset, config.num_folds, derive_seed(config.seed, "folds"));

  std::string base_dir;
  if (!run_dir.empty()) {
    base_dir = run_dir + "/runs/" + config_hash(config);
    fs::create_directories(base_dir);
    std::ofstream label(base_dir + "/config_label.txt");
    label << config_label(config) << '\n';
  }

  CvResult result;
  result.folds.resize(config.num_folds);

  run_parallel(config.workers, config.num_folds, [&](int f) {
    if (cancel_requested()) {
      result.folds[f].failed = true;
      result.folds[f].error = "cancelled";
      return;
    }
    std::string fold_dir;
    if (!base_dir.empty()) {
      fold_dir = base_dir + "/fold" + std::to_string(f);
      fs::create_directories(fold_dir);
    }
    try {
      result.folds[f] = run_one_fold(config, dataset, plan.folds[f], f, fold_dir);
    } catch (const std::exception& e) {
      result.folds[f].failed = true;
      result.folds[f].error = e.what();
      if (!fold_dir.empty()) {
        std::ofstream marker(fold_dir + "/FAILED");
        marker << e.what() << '\n';
      }
    }
  });

  std::vector<metrics::MetricReport> ok_reports, ok_gen_reports;
  Scalar selection_sum = 0;
  int ok = 0;
  for (const FoldResult& f : result.folds) {
    if (f.failed) {
      result.any_failed = true;
      continue;
    }
    ok_reports.push_back(f.test_report);
    if (config.framework == Framework::Adversarial) ok_gen_reports.push_back(f.generator_report);
    selection_sum += f.selection_value;
    ++ok;
  }
  result.fold_mean = metrics::average_reports(ok_reports);
  result.generator_fold_mean = metrics::average_reports(ok_gen_reports);
  result.selection_value = ok > 0 ? selection_sum / ok : 0.0;

  if (!run_dir.empty()) write_summary_csv(run_dir + "/summary.csv", config, result);
  return result;
}

void write_summary_csv(const std::string& path, const ExperimentConfig& config,
                       const CvResult& result) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "fold,split,metric,cutoff,value,query_count\n";
  const bool adversarial = config.framework == Framework::Adversarial;
  const char* test_split = adversarial ? "test_discriminator" : "test";
  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    const FoldResult& fold = result.folds[f];
    if (fold.failed) continue;
    metrics::write_report_csv(os, fold.test_report, std::to_string(f), test_split, false);
    if (adversarial)
      metrics::write_report_csv(os, fold.generator_report, std::to_string(f), "test_generator",
                                false);
  }
  metrics::write_report_csv(os, result.fold_mean, "mean", test_split, false);
  if (adversarial)
    metrics::write_report_csv(os, result.generator_fold_mean, "mean", "test_generator", false);
}

std::vector<GridRow> grid_search(const GridSpec& grid, const ExperimentConfig& base,
                                 const data::Dataset& dataset, const std::string& out_dir) {
  const std::vector<nn::Activation> acts =
      grid.activations.empty() ? std::vector<nn::Activation>{base.net.activation}
                               : grid.activations;
  const std::vector<int> layer_counts =
      grid.layer_counts.empty() ? std::vector<int>{base.net.layers} : grid.layer_counts;
  const std::vector<int> hiddens =
      grid.hidden_sizes.empty() ? std::vector<int>{base.net.hidden} : grid.hidden_sizes;
  const std::vector<Scalar> lrs = grid.lrs.empty() ? std::vector<Scalar>{base.lr} : grid.lrs;

  const std::size_t cells = acts.size() * layer_counts.size() * hiddens.size() * lrs.size();
  if (cells == 0) throw ConfigError("empty grid");
  if (cells > static_cast<std::size_t>(grid.max_cells))
    throw ConfigError("grid has " + std::to_string(cells) + " cells, max is " +
                      std::to_string(grid.max_cells));

  std::vector<GridRow> rows;
  for (nn::Activation act : acts) {
    for (int layers : layer_counts) {
      for (int hidden : hiddens) {
        for (Scalar lr : lrs) {
          if (cancel_requested()) break;
          GridRow row;
          row.config = base;
          row.config.net.activation = act;
          row.config.net.layers = layers;
          row.config.net.hidden = hidden;
          row.config.lr = lr;
          std::ostringstream label;
          label << nn::to_string(act) << "/layers=" << layers << "/hidden=" << hidden
                << "/lr=" << format_scalar(lr);
          row.label = label.str();
          row.result = run_cross_validation(row.config, dataset, out_dir);
          row.selection_value = row.result.selection_value;
          rows.push_back(std::move(row));
        }
      }
    }
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const GridRow& a, const GridRow& b) {
                     return a.selection_value > b.selection_value;
                   });

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/grid.csv");
    os << "rank,config,selection_ndcg@5";
    for (int k : base.cutoffs) os << ",test_ndcg@" << k;
    os << '\n';
    char buf[32];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      os << (r + 1) << ',' << rows[r].label;
      std::snprintf(buf, sizeof(buf), ",%.6f", rows[r].selection_value);
      os << buf;
      for (int k : base.cutoffs) {
        const Scalar v = rows[r].result.fold_mean.values.count({"nDCG", k})
                             ? rows[r].result.fold_mean.mean("nDCG", k)
                             : 0.0;
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        os << buf;
      }
      os << '\n';
    }

    // When exactly one numeric axis varies, emit two-column plot data in
    // cell order (layer-count and similar curves).
    const bool layers_curve = layer_counts.size() > 1 && acts.size() == 1 &&
                              hiddens.size() == 1 && lrs.size() == 1;
    const bool hidden_curve = hiddens.size() > 1 && acts.size() == 1 &&
                              layer_counts.size() == 1 && lrs.size() == 1;
    if (layers_curve || hidden_curve) {
      const auto& axis = layers_curve ? layer_counts : hiddens;
      std::vector<GridRow const*> by_cell(axis.size(), nullptr);
      for (const GridRow& r : rows) {
        const int v = layers_curve ? r.config.net.layers : r.config.net.hidden;
        const auto pos = std::find(axis.begin(), axis.end(), v) - axis.begin();
        by_cell[pos] = &r;
      }
      if (std::none_of(by_cell.begin(), by_cell.end(),
                       [](const GridRow* p) { return p == nullptr; })) {
        std::ofstream curve(out_dir + "/curve.csv");
        for (std::size_t i = 0; i < by_cell.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%.6f", by_cell[i]->selection_value);
          curve << axis[i] << ',' << buf << '\n';
        }
      }
    }
  }
  return rows;
}

std::vector<MaskSweepRow> mask_sweep(const std::vector<Scalar>& ratios,
                                     const ExperimentConfig& base, const data::Dataset& dataset,
                                     const std::string& out_dir) {
  for (Scalar r : ratios) {
    if (r < 0.0 || r > 1.0) throw ConfigError("mask ratios must lie in [0, 1]");
  }
  std::vector<MaskSweepRow> rows;
  for (Scalar ratio : ratios) {
    if (cancel_requested()) break;
    ExperimentConfig config = base;
    config.mask_ratio = ratio;
    const CvResult cv = run_cross_validation(config, dataset, out_dir);
    MaskSweepRow row;
    row.ratio = ratio;
    row.ndcg1 = cv.fold_mean.values.count({"nDCG", 1}) ? cv.fold_mean.mean("nDCG", 1) : 0.0;
    if (base.framework == Framework::Adversarial) {
      row.gen_ndcg1 = cv.generator_fold_mean.values.count({"nDCG", 1})
                          ? cv.generator_fold_mean.mean("nDCG", 1)
                          : 0.0;
    }
    rows.push_back(row);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/masksweep.csv");
    char buf[64];
    for (const MaskSweepRow& row : rows) {
      if (base.framework == Framework::Adversarial) {
        std::snprintf(buf, sizeof(buf), "%g,%.6f,%.6f", row.ratio, row.ndcg1, row.gen_ndcg1);
      } else {
        std::snprintf(buf, sizeof(buf), "%g,%.6f", row.ratio, row.ndcg1);
      }
      os << buf << '\n';
    }
  }
  return rows;
}

}  // namespace ltr::harness
