#include "ltr/rankers_adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ltr/metrics.hpp"

namespace ltr::adv {

namespace {

Scalar test_ndcg1(nn::ScoringNet& eval_net, const data::Dataset& dataset,
                  const std::vector<int>& test_idx) {
  if (test_idx.empty()) return 0.0;
  Scalar sum = 0;
  for (int gi : test_idx) {
    const data::QueryGroup& g = dataset.groups[gi];
    const Vector scores = nn::forward(eval_net, g.features);
    const Permutation perm = metrics::rank_by_scores(scores);
    const Vector ranked = metrics::labels_in_rank_order(g.labels, perm);
    Vector ideal = g.labels;
    std::sort(ideal.data(), ideal.data() + ideal.size(), std::greater<Scalar>());
    sum += metrics::ndcg_at_k(ranked, ideal, 1);
  }
  return sum / static_cast<Scalar>(test_idx.size());
}

}  // namespace

std::pair<Scalar, Vector> pl_log_prob_clamped_grad(const Vector& scores,
                                                   const std::vector<int>& ranking,
                                                   Scalar temperature) {
  const int m = static_cast<int>(scores.size());
  const Vector s = scores / temperature;
  const Scalar log_lo = std::log(kProbClamp);
  const Scalar log_hi = std::log1p(-kProbClamp);

  std::vector<int> remaining(m);
  std::iota(remaining.begin(), remaining.end(), 0);

  Scalar logp = 0;
  Vector grad = Vector::Zero(m);
  for (int chosen : ranking) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (int idx : remaining) hi = std::max(hi, s[idx]);
    Scalar denom = 0;
    for (int idx : remaining) denom += std::exp(s[idx] - hi);
    const Scalar log_factor = (s[chosen] - hi) - std::log(denom);
    if (log_factor < log_lo) {
      logp += log_lo;  // clamped: no gradient through this factor
    } else if (log_factor > log_hi) {
      logp += log_hi;
    } else {
      logp += log_factor;
      grad[chosen] += 1.0 / temperature;
      for (int idx : remaining) grad[idx] -= std::exp(s[idx] - hi) / denom / temperature;
    }
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
  }
  return {logp, std::move(grad)};
}

RankingSample gumbel_sample_ranking(const Vector& generator_scores, int k, Scalar temperature,
                                    Rng& rng) {
  const int m = static_cast<int>(generator_scores.size());
  if (k > m) throw std::invalid_argument("gumbel_sample_ranking: k > document count");
  if (k < 1) throw std::invalid_argument("gumbel_sample_ranking: k must be >= 1");

  Vector keys(m);
  for (int i = 0; i < m; ++i) keys[i] = rng.gumbel() + generator_scores[i] / temperature;

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });
  order.resize(k);

  RankingSample sample;
  sample.indices = std::move(order);
  sample.generated = true;
  sample.log_prob_under_generator = pl_log_prob(generator_scores, sample.indices, temperature);
  return sample;
}

RankingSample gumbel_sample_ranking(nn::ScoringNet& generator_net, const Matrix& features, int k,
                                    Scalar temperature, Rng& rng) {
  nn::ScoringNet eval_net = generator_net;
  eval_net.mode = nn::Mode::Eval;
  return gumbel_sample_ranking(nn::forward(eval_net, features), k, temperature, rng);
}

std::optional<RankingSample> sample_true_ranking(const data::QueryGroup& group, int k, Rng& rng) {
  std::vector<int> unmasked;
  for (int i = 0; i < group.num_docs(); ++i) {
    if (!group.masked[i]) unmasked.push_back(i);
  }
  if (static_cast<int>(unmasked.size()) < k) return std::nullopt;

  rng.shuffle(unmasked);  // tie order among equal labels
  std::stable_sort(unmasked.begin(), unmasked.end(),
                   [&](int a, int b) { return group.labels[a] > group.labels[b]; });
  unmasked.resize(k);

  RankingSample sample;
  sample.qid = group.qid;
  sample.indices = std::move(unmasked);
  sample.generated = false;
  return sample;
}

Scalar discriminator_step(nn::ScoringNet& disc_net, nn::AdamState& disc_adam,
                          const Matrix& features, const RankingSample& true_sample,
                          const RankingSample& gen_sample, Scalar temperature) {
  if (true_sample.indices.size() != gen_sample.indices.size())
    throw std::invalid_argument("discriminator_step: samples have different k");

  disc_net.mode = nn::Mode::Train;
  nn::ForwardCache cache;
  const Vector scores = nn::forward(disc_net, features, &cache);

  const auto [logd_true, grad_true] =
      pl_log_prob_clamped_grad(scores, true_sample.indices, temperature);
  const auto [logd_gen, grad_gen] =
      pl_log_prob_clamped_grad(scores, gen_sample.indices, temperature);

  // loss = -log D(true) - log(1 - D(gen)); D(gen) stays below 1 by the
  // factor clamp, so log1p(-D) is finite.
  const Scalar d_gen = std::exp(logd_gen);
  const Scalar loss = -logd_true - std::log1p(-d_gen);
  if (!std::isfinite(loss)) throw TrainingDiverged("discriminator_step: non-finite loss");

  // d loss / d logD_gen = D / (1 - D)
  const Vector grad_scores = -grad_true + (d_gen / (1.0 - d_gen)) * grad_gen;
  const nn::Gradients grads = nn::backward(disc_net, cache, grad_scores);
  nn::adam_step(disc_adam, disc_net, grads);
  return loss;
}

Vector reinforce_score_gradient(const Vector& gen_scores, const std::vector<RankingSample>& samples,
                                const std::vector<Scalar>& rewards, Scalar temperature,
                                bool mean_baseline) {
  if (samples.empty() || samples.size() != rewards.size())
    throw std::invalid_argument("reinforce_score_gradient: samples/rewards mismatch");
  const Scalar S = static_cast<Scalar>(samples.size());
  Scalar baseline = 0;
  if (mean_baseline) {
    for (Scalar r : rewards) baseline += r;
    baseline /= S;
  }
  // Gradient of the surrogate loss -(1/S) sum (R - b) log P(pi).
  Vector grad = Vector::Zero(gen_scores.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto [logp, glogp] = pl_log_prob_grad(gen_scores, samples[s].indices, temperature);
    grad -= ((rewards[s] - baseline) / S) * glogp;
  }
  return grad;
}

GeneratorStepResult generator_step(nn::ScoringNet& gen_net, nn::AdamState& gen_adam,
                                   const nn::ScoringNet& disc_net, const data::QueryGroup& group,
                                   int k, int samples_per_query, Scalar temperature, Rng& rng) {
  if (samples_per_query < 1)
    throw std::invalid_argument("generator_step: samples_per_query must be >= 1");

  gen_net.mode = nn::Mode::Train;
  nn::ForwardCache cache;
  const Vector gen_scores = nn::forward(gen_net, group.features, &cache);
  const Vector disc_scores = nn::score_eval(disc_net, group.features);

  std::vector<RankingSample> samples;
  std::vector<Scalar> rewards;
  GeneratorStepResult result;
  for (int s = 0; s < samples_per_query; ++s) {
    RankingSample sample = gumbel_sample_ranking(gen_scores, k, temperature, rng);
    // Non-saturating reward: R = log D(pi), clamped like the discriminator.
    const Scalar reward = pl_log_prob_clamped_grad(disc_scores, sample.indices, temperature).first;
    result.mean_reward += reward / samples_per_query;
    samples.push_back(std::move(sample));
    rewards.push_back(reward);
  }
  for (std::size_t s = 0; s < samples.size(); ++s) {
    result.surrogate_loss -=
        (rewards[s] - result.mean_reward) * samples[s].log_prob_under_generator /
        static_cast<Scalar>(samples.size());
  }

  const Vector grad_scores =
      reinforce_score_gradient(gen_scores, samples, rewards, temperature, true);
  const nn::Gradients grads = nn::backward(gen_net, cache, grad_scores);
  nn::adam_step(gen_adam, gen_net, grads);
  return result;
}

AdvResult train_adversarial(const AdversarialSpec& spec, nn::ScoringNet gen_net,
                            nn::ScoringNet disc_net, const data::Dataset& dataset,
                            const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                            const AdvTrainOptions& options) {
  if (!dataset.groups.empty() && (dataset.feature_dim != gen_net.input_dim() ||
                                  dataset.feature_dim != disc_net.input_dim()))
    throw std::invalid_argument("train_adversarial: dataset feature dim != net input dim");
  if (spec.k < 1) throw ConfigError("adversarial ranking size k must be >= 1");
  if (spec.temperature <= 0) throw ConfigError("adversarial temperature must be > 0");

  AdvResult result;
  nn::AdamState gen_adam = nn::make_adam(gen_net, options.lr, options.l2);
  nn::AdamState disc_adam = nn::make_adam(disc_net, options.lr, options.l2);
  Rng shuffle_rng(derive_seed(spec.seed, "adv-shuffle"));
  Rng sample_rng(derive_seed(spec.seed, "adv-sample"));

  std::vector<int> order = train_idx;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    Scalar d_loss_sum = 0;
    int d_count = 0;
    Scalar g_reward_sum = 0;
    int g_count = 0;

    for (int gi : order) {
      const data::QueryGroup& group = dataset.groups[gi];
      const int k_eff = std::min(spec.k, group.num_docs());

      for (int step = 0; step < spec.d_steps; ++step) {
        const auto true_sample = sample_true_ranking(group, k_eff, sample_rng);
        if (!true_sample) break;  // too few unmasked documents: skip D here
        const RankingSample gen_sample =
            gumbel_sample_ranking(gen_net, group.features, k_eff, spec.temperature, sample_rng);
        d_loss_sum += discriminator_step(disc_net, disc_adam, group.features, *true_sample,
                                         gen_sample, spec.temperature);
        ++d_count;
      }
      for (int step = 0; step < spec.g_steps; ++step) {
        const GeneratorStepResult g =
            generator_step(gen_net, gen_adam, disc_net, group, k_eff, spec.samples_per_query,
                           spec.temperature, sample_rng);
        g_reward_sum += g.mean_reward;
        ++g_count;
      }
    }

    nn::ScoringNet gen_eval = gen_net;
    gen_eval.mode = nn::Mode::Eval;
    nn::ScoringNet disc_eval = disc_net;
    disc_eval.mode = nn::Mode::Eval;
    AdvEpochRow row;
    row.epoch = epoch;
    row.g_reward_mean = g_count > 0 ? g_reward_sum / g_count : 0.0;
    row.d_loss_mean = d_count > 0 ? d_loss_sum / d_count : 0.0;
    row.g_test_ndcg1 = test_ndcg1(gen_eval, dataset, test_idx);
    row.d_test_ndcg1 = test_ndcg1(disc_eval, dataset, test_idx);
    result.log.push_back(row);
  }

  result.generator = std::move(gen_net);
  result.discriminator = std::move(disc_net);
  result.gen_adam = std::move(gen_adam);
  result.disc_adam = std::move(disc_adam);
  return result;
}

void write_adv_log_csv(std::ostream& os, const std::vector<AdvEpochRow>& rows) {
  os << "epoch,g_reward_mean,d_loss_mean,g_test_ndcg@1,d_test_ndcg@1\n";
  char buf[128];
  for (const AdvEpochRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f", r.epoch, r.g_reward_mean,
                  r.d_loss_mean, r.g_test_ndcg1, r.d_test_ndcg1);
    os << buf << '\n';
  }
}

}  // namespace ltr::adv
