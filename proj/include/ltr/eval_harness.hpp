#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltr/letor_data.hpp"
#include "ltr/metrics.hpp"
#include "ltr/neural_core.hpp"
#include "ltr/rankers_adversarial.hpp"
#include "ltr/rankers_erm.hpp"
#include "ltr/types.hpp"

namespace ltr::harness {

enum class Framework { Erm, Adversarial };
enum class Normalization { None, Zscore, MinMax };

Normalization normalization_from_string(const std::string& name);
std::string to_string(Normalization n);

struct NetConfig {
  int layers = 3;  // number of weight matrices
  int hidden = 100;
  nn::Activation activation = nn::Activation::ReLU;
  bool batchnorm = true;
};

// num_queries > 0 selects the synthetic source instead of dataset_path.
struct SyntheticConfig {
  int num_queries = 0;
  int docs_per_query = 30;
  int dim = 20;
  Scalar noise = 0.1;
};

struct ExperimentConfig {
  Framework framework = Framework::Erm;
  erm::RankerSpec erm_spec;
  adv::AdversarialSpec adv_spec;
  NetConfig net;
  Scalar lr = 1e-3;
  Scalar l2 = 1e-3;
  int epochs = 100;
  std::vector<int> cutoffs{1, 3, 5, 10, 20, 50};
  int num_folds = 5;
  std::uint64_t seed = 7;
  Scalar mask_ratio = 0.0;
  std::string dataset_path;
  SyntheticConfig synthetic;
  std::optional<int> feature_dim;
  data::QidPolicy qid_policy = data::QidPolicy::Error;
  Normalization normalization = Normalization::None;
  bool binarize = false;
  Scalar binarize_threshold = 1.0;
  Scalar relevance_threshold = 1.0;
  bool exclude_zero_relevance = false;
  int workers = 1;
};

// Compact deterministic description of every knob; the config hash (and so
// the run directory) is derived from it.
std::string config_label(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

struct SyntheticData {
  data::Dataset dataset;
  std::vector<Vector> utilities;  // hidden generating utility per group
  Vector weight;
};

// Gaussian features, one hidden weight vector, utility w.x + noise*eps, and
// labels from per-query utility quantiles (grades 0..4, equal buckets). The
// utilities are the oracle ranking for acceptance checks.
SyntheticData make_synthetic_dataset(int num_queries, int docs_per_query, int dim, Scalar noise,
                                     std::uint64_t seed);

// Loads (file or synthetic) and applies binarization/normalization.
data::Dataset load_prepared_dataset(const ExperimentConfig& config);

struct FoldResult {
  metrics::MetricReport test_report;       // discriminator's report when adversarial
  metrics::MetricReport generator_report;  // adversarial only
  int best_epoch = -1;
  Scalar selection_value = 0;  // best vali nDCG@5 (ERM) / final D test nDCG@5 (adv)
  bool failed = false;
  std::string error;
};

struct CvResult {
  std::vector<FoldResult> folds;
  metrics::MetricReport fold_mean;
  metrics::MetricReport generator_fold_mean;
  Scalar selection_value = 0;  // mean over non-failed folds
  bool any_failed = false;
};

// One cross-validated run. ERM folds train `epochs`, select the best
// validation-nDCG@5 epoch, and report that checkpoint's test metrics;
// adversarial folds skip validation and report final-epoch test metrics.
// When run_dir is non-empty, writes runs/<hash>/fold<k>/{train_log.csv,
// checkpoint,test_metrics.csv} artifacts under it plus summary.csv. A fold
// failure is recorded (FAILED marker file) and the run continues.
CvResult run_cross_validation(const ExperimentConfig& config, const data::Dataset& dataset,
                              const std::string& run_dir = "");

void write_summary_csv(const std::string& path, const ExperimentConfig& config,
                       const CvResult& result);

struct GridSpec {
  std::vector<nn::Activation> activations;
  std::vector<int> layer_counts;
  std::vector<int> hidden_sizes;
  std::vector<Scalar> lrs;
  int max_cells = 512;
};

struct GridRow {
  ExperimentConfig config;
  std::string label;
  Scalar selection_value = 0;
  CvResult result;
};

// Every grid cell evaluated through run_cross_validation, sorted descending
// by the selection metric (ties keep cell order). Writes grid.csv, and
// curve.csv when exactly one numeric axis varies.
std::vector<GridRow> grid_search(const GridSpec& grid, const ExperimentConfig& base,
                                 const data::Dataset& dataset, const std::string& out_dir = "");

struct MaskSweepRow {
  Scalar ratio = 0;
  Scalar ndcg1 = 0;      // discriminator's when adversarial
  Scalar gen_ndcg1 = 0;  // adversarial only
};

// Cross-validation per masking ratio (training split only; fresh mask seed
// per fold). Writes masksweep.csv two-column plot data.
std::vector<MaskSweepRow> mask_sweep(const std::vector<Scalar>& ratios,
                                     const ExperimentConfig& base, const data::Dataset& dataset,
                                     const std::string& out_dir = "");

// Cooperative cancellation at fold boundaries (wired to SIGINT by the CLI).
void request_cancel();
bool cancel_requested();
void reset_cancel();

}  // namespace ltr::harness
