#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltr/letor_data.hpp"
#include "ltr/neural_core.hpp"
#include "ltr/rng.hpp"
#include "ltr/types.hpp"

namespace ltr::erm {

enum class LossKind {
  RankMSE,
  RankNet,
  LambdaRank,
  ListNet,
  ListMLE,
  RankCosine,
  ApproxNDCG,
  STListNet,
};

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);
const std::vector<std::string>& loss_kind_names();

enum class MaskedLabelPolicy { Zero, Exclude };
enum class ListNetTarget { RawLabels, Gains };

struct RankerSpec {
  LossKind kind = LossKind::RankNet;
  Scalar sigma = 1.0;  // pairwise logistic scale
  Scalar alpha = 10.0; // ApproxNDCG sharpness
  std::uint64_t seed = 0;
  MaskedLabelPolicy masked_label_policy = MaskedLabelPolicy::Zero;
  ListNetTarget listnet_target = ListNetTarget::RawLabels;
};

struct LossResult {
  Scalar loss = 0;
  Vector grad;  // d loss / d scores
};

enum class TiePolicy { ByIndex, Seeded };

LossResult loss_rank_mse(const Vector& scores, const Vector& labels);
LossResult loss_ranknet(const Vector& scores, const Vector& labels, Scalar sigma = 1.0);
LossResult loss_listnet_top1(const Vector& scores, const Vector& labels,
                             ListNetTarget target = ListNetTarget::RawLabels);

// Negative Plackett-Luce log-likelihood of the target permutation (labels
// sorted descending, ties per tie_policy).
LossResult loss_listmle(const Vector& scores, const Vector& labels,
                        TiePolicy tie_policy = TiePolicy::ByIndex, std::uint64_t tie_seed = 0);
LossResult loss_rankcosine(const Vector& scores, const Vector& labels);
LossResult loss_approxndcg(const Vector& scores, const Vector& labels, Scalar alpha = 10.0);

// ListNet on Gumbel-perturbed scores; the noise is an additive constant, so
// the gradient flows through the scores only. noise_override (same length as
// scores) replaces the sampled noise when given.
LossResult loss_stlistnet(const Vector& scores, const Vector& labels, Rng& rng,
                          const Vector* noise_override = nullptr,
                          ListNetTarget target = ListNetTarget::RawLabels);

// RankNet pair gradients scaled by |delta nDCG| on the current ranking.
// LambdaRank defines gradients directly; the returned loss is the
// |delta|-weighted pairwise logistic surrogate whose score-gradient (at
// frozen |delta|) equals the lambda values, logged for the training CSV.
LossResult lambda_gradients(const Vector& scores, const Vector& labels, Scalar sigma = 1.0);

// Dispatch on spec.kind. rng feeds ST-ListNet noise (and listwise tie
// shuffling when a seeded policy is wired in).
LossResult compute_loss(const RankerSpec& spec, const Vector& scores, const Vector& labels,
                        Rng& rng);

struct TrainOptions {
  int epochs = 100;
  Scalar lr = 1e-3;
  Scalar l2 = 1e-3;
  std::uint64_t seed = 0;
  // Queries that cannot form a train-mode batch (m < 2 with batchnorm) are
  // skipped rather than aborting the epoch.
  bool skip_degenerate = true;
};

struct EpochRow {
  int epoch = 0;
  Scalar loss_mean = 0;
  Scalar vali_ndcg5 = 0;
};

struct ErmResult {
  nn::ScoringNet final_net;
  nn::AdamState final_adam;
  nn::ScoringNet best_net;  // epoch with the highest vali nDCG@5
  nn::AdamState best_adam;  // optimizer state at that epoch, for bit-exact resume
  int best_epoch = -1;
  Scalar best_vali_ndcg5 = 0;
  std::vector<EpochRow> log;
};

// Per-query ERM training: seeded query shuffle each epoch, loss gradient on
// scores, backprop, one Adam step per query; masked labels handled per
// spec.masked_label_policy; validation nDCG@5 recorded each epoch.
ErmResult train_erm(const RankerSpec& spec, nn::ScoringNet net, const data::Dataset& dataset,
                    const std::vector<int>& train_idx, const std::vector<int>& vali_idx,
                    const TrainOptions& options);

void write_train_log_csv(std::ostream& os, const std::vector<EpochRow>& rows);

}  // namespace ltr::erm
