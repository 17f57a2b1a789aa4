#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltr/letor_data.hpp"
#include "ltr/neural_core.hpp"
#include "ltr/plackett_luce.hpp"
#include "ltr/rng.hpp"
#include "ltr/types.hpp"

namespace ltr::adv {

// Minimax game over top-k rankings: k = 1 pointwise, k = 2 pairwise,
// k >> 1 listwise. Both players are Plackett-Luce scoring functions with a
// shared temperature.
struct AdversarialSpec {
  int k = 10;
  Scalar temperature = 0.5;
  int g_steps = 1;  // generator steps per query per epoch
  int d_steps = 1;  // discriminator steps per query per epoch
  int samples_per_query = 5;
  std::uint64_t seed = 0;
};

struct RankingSample {
  std::string qid;
  std::vector<int> indices;  // ordered, length k, distinct
  bool generated = false;
  Scalar log_prob_under_generator = 0;
};

// Probability clamp for the discriminator: applied to each Plackett-Luce
// softmax factor (and to 1 - D), which keeps every log D term finite for
// arbitrary score magnitudes. Clamping the product itself would zero the
// discriminator's gradient on any true top-k ranking with k >= 5, whose
// probability is generically far below any workable floor.
inline constexpr Scalar kProbClamp = 1e-7;

// Sum of log factors, each clamped into [kProbClamp, 1 - kProbClamp], plus
// its gradient w.r.t. scores (zero through clamped factors).
std::pair<Scalar, Vector> pl_log_prob_clamped_grad(const Vector& scores,
                                                   const std::vector<int>& ranking,
                                                   Scalar temperature);

// Gumbel-max top-k sample: sort g_i + scores_i / temperature descending and
// take the first k; an exact Plackett-Luce draw at that temperature.
RankingSample gumbel_sample_ranking(const Vector& generator_scores, int k, Scalar temperature,
                                    Rng& rng);
RankingSample gumbel_sample_ranking(nn::ScoringNet& generator_net, const Matrix& features, int k,
                                    Scalar temperature, Rng& rng);

// Ground-truth top-k: unmasked documents sorted by label descending, ties
// shuffled by rng. Empty when fewer than k documents are unmasked (the
// caller skips the query).
std::optional<RankingSample> sample_true_ranking(const data::QueryGroup& group, int k, Rng& rng);

// -[log D(true) + log(1 - D(gen))] with the factor clamp above, followed by
// one Adam step on the discriminator.
Scalar discriminator_step(nn::ScoringNet& disc_net, nn::AdamState& disc_adam,
                          const Matrix& features, const RankingSample& true_sample,
                          const RankingSample& gen_sample, Scalar temperature);

// REINFORCE surrogate for the mean-baselined policy gradient over a batch of
// sampled rankings: -(1/S) sum_s (R_s - b) log P(pi_s). Exposed for the
// estimator tests; generator_step backpropagates its score-gradient.
Vector reinforce_score_gradient(const Vector& gen_scores, const std::vector<RankingSample>& samples,
                                const std::vector<Scalar>& rewards, Scalar temperature,
                                bool mean_baseline = true);

struct GeneratorStepResult {
  Scalar surrogate_loss = 0;
  Scalar mean_reward = 0;
};

// Draws samples_per_query rankings, rewards each with log D (clamped), and
// applies one baselined REINFORCE Adam step on the generator.
GeneratorStepResult generator_step(nn::ScoringNet& gen_net, nn::AdamState& gen_adam,
                                   const nn::ScoringNet& disc_net, const data::QueryGroup& group,
                                   int k, int samples_per_query, Scalar temperature, Rng& rng);

struct AdvEpochRow {
  int epoch = 0;
  Scalar g_reward_mean = 0;
  Scalar d_loss_mean = 0;
  Scalar g_test_ndcg1 = 0;
  Scalar d_test_ndcg1 = 0;
};

struct AdvResult {
  nn::ScoringNet generator;
  nn::ScoringNet discriminator;
  nn::AdamState gen_adam;
  nn::AdamState disc_adam;
  std::vector<AdvEpochRow> log;
};

struct AdvTrainOptions {
  int epochs = 100;
  Scalar lr = 1e-3;
  Scalar l2 = 1e-3;
};

// Alternating per-query optimization (d_steps then g_steps per query, 1:1 by
// default). Queries with fewer than k unmasked documents skip their
// discriminator steps. Evaluation ranks by raw net scores on the test split.
AdvResult train_adversarial(const AdversarialSpec& spec, nn::ScoringNet gen_net,
                            nn::ScoringNet disc_net, const data::Dataset& dataset,
                            const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                            const AdvTrainOptions& options);

void write_adv_log_csv(std::ostream& os, const std::vector<AdvEpochRow>& rows);

}  // namespace ltr::adv
