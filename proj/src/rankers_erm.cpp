#include "ltr/rankers_erm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ltr/metrics.hpp"
#include "ltr/plackett_luce.hpp"

namespace ltr::erm {

namespace {

const std::vector<std::string> kLossNames = {"RankMSE",    "RankNet",    "LambdaRank",
                                             "ListNet",    "ListMLE",    "RankCosine",
                                             "ApproxNDCG", "ST-ListNet"};

Scalar softplus(Scalar z) {
  // log(1 + e^z) without overflow on either tail
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

Scalar sigmoid(Scalar z) { return z > 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

Vector softmax(const Vector& v) {
  const Scalar hi = v.maxCoeff();
  Vector e = ((v.array() - hi).exp()).matrix();
  return e / e.sum();
}

Vector gain_vector(const Vector& labels) {
  // 2^y - 1
  return ((labels.array() * std::log(2.0)).exp() - 1.0).matrix();
}

Vector listnet_target_vector(const Vector& labels, ListNetTarget target) {
  if (target == ListNetTarget::RawLabels) return softmax(labels);
  return softmax(gain_vector(labels));
}

}  // namespace

LossKind loss_kind_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kLossNames.size(); ++i) {
    if (kLossNames[i] == name) return static_cast<LossKind>(i);
  }
  // Accept the unhyphenated spelling too.
  if (name == "STListNet") return LossKind::STListNet;
  std::string valid;
  for (const auto& n : kLossNames) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ranker kind \"" + name + "\"; valid kinds: " + valid);
}

std::string to_string(LossKind kind) { return kLossNames[static_cast<int>(kind)]; }

const std::vector<std::string>& loss_kind_names() { return kLossNames; }

LossResult loss_rank_mse(const Vector& scores, const Vector& labels) {
  const Scalar m = static_cast<Scalar>(scores.size());
  LossResult r;
  const Vector diff = scores - labels;
  r.loss = diff.squaredNorm() / m;
  r.grad = (2.0 / m) * diff;
  return r;
}

LossResult loss_ranknet(const Vector& scores, const Vector& labels, Scalar sigma) {
  const int m = static_cast<int>(scores.size());
  LossResult r;
  r.grad = Vector::Zero(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!(labels[i] > labels[j])) continue;
      const Scalar margin = sigma * (scores[i] - scores[j]);
      r.loss += softplus(-margin);
      const Scalar w = -sigma * sigmoid(-margin);
      r.grad[i] += w;
      r.grad[j] -= w;
    }
  }
  return r;
}

LossResult lambda_gradients(const Vector& scores, const Vector& labels, Scalar sigma) {
  const int m = static_cast<int>(scores.size());
  LossResult r;
  r.grad = Vector::Zero(m);

  Vector ideal = labels;
  std::sort(ideal.data(), ideal.data() + ideal.size(), std::greater<Scalar>());
  const Scalar idcg = metrics::dcg_at_k(ideal, m);
  if (idcg <= 0.0) return r;  // all labels zero

  const Permutation perm = metrics::rank_by_scores(scores);
  const Vector gains = gain_vector(labels);

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!(labels[i] > labels[j])) continue;
      const Scalar delta = std::abs(gains[i] - gains[j]) *
                           std::abs(1.0 / std::log2(1.0 + perm.forward[i]) -
                                    1.0 / std::log2(1.0 + perm.forward[j])) /
                           idcg;
      const Scalar margin = sigma * (scores[i] - scores[j]);
      const Scalar lambda = -sigma * sigmoid(-margin) * delta;
      r.grad[i] += lambda;
      r.grad[j] -= lambda;
      r.loss += delta * softplus(-margin);
    }
  }
  return r;
}

LossResult loss_listnet_top1(const Vector& scores, const Vector& labels, ListNetTarget target) {
  LossResult r;
  const Vector p = listnet_target_vector(labels, target);
  const Scalar hi = scores.maxCoeff();
  const Vector shifted = (scores.array() - hi).matrix();
  const Scalar lse = std::log(shifted.array().exp().sum());
  const Vector logq = (shifted.array() - lse).matrix();
  r.loss = -p.dot(logq);
  r.grad = logq.array().exp().matrix() - p;
  return r;
}

LossResult loss_listmle(const Vector& scores, const Vector& labels, TiePolicy tie_policy,
                        std::uint64_t tie_seed) {
  const int m = static_cast<int>(scores.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  if (tie_policy == TiePolicy::Seeded) {
    Rng rng(derive_seed(tie_seed, "listmle-ties"));
    rng.shuffle(order);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return labels[a] > labels[b]; });

  auto [logp, grad] = pl_log_prob_grad(scores, order, 1.0);
  LossResult r;
  r.loss = -logp;
  r.grad = -grad;
  return r;
}

LossResult loss_rankcosine(const Vector& scores, const Vector& labels) {
  LossResult r;
  const Scalar ns = scores.norm();
  const Scalar ny = labels.norm();
  if (ns == 0.0 || ny == 0.0) {
    r.loss = 0.5;
    r.grad = Vector::Zero(scores.size());
    return r;
  }
  const Scalar cosine = scores.dot(labels) / (ns * ny);
  r.loss = 0.5 * (1.0 - cosine);
  r.grad = -0.5 * (labels / (ns * ny) - (cosine / (ns * ns)) * scores);
  return r;
}

LossResult loss_approxndcg(const Vector& scores, const Vector& labels, Scalar alpha) {
  if (alpha <= 0) throw std::invalid_argument("loss_approxndcg: alpha must be > 0");
  const int m = static_cast<int>(scores.size());
  LossResult r;
  r.grad = Vector::Zero(m);

  Vector ideal = labels;
  std::sort(ideal.data(), ideal.data() + ideal.size(), std::greater<Scalar>());
  const Scalar idcg = metrics::dcg_at_k(ideal, m);
  if (idcg <= 0.0) return r;

  // Smoothed rank: pi_hat(i) = 1 + sum_{j != i} sigmoid(alpha (s_j - s_i))
  Matrix sig(m, m);
  Vector pihat = Vector::Ones(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      sig(i, j) = sigmoid(alpha * (scores[j] - scores[i]));
      pihat[i] += sig(i, j);
    }
  }

  const Vector gains = gain_vector(labels);
  const Scalar ln2 = std::log(2.0);
  Scalar approx = 0;
  Vector dn_dpihat(m);  // d approxNDCG-numerator / d pihat_i
  for (int i = 0; i < m; ++i) {
    const Scalar lg = std::log2(1.0 + pihat[i]);
    approx += gains[i] / lg;
    dn_dpihat[i] = -gains[i] / (lg * lg * (1.0 + pihat[i]) * ln2);
  }
  r.loss = -approx / idcg;

  // d pihat_i / d s_j = +alpha sig'(i,j) for j != i, and the mirrored
  // -alpha sig'(i,j) for s_i; loss = -numerator / idcg.
  Vector dnum(m);
  dnum.setZero();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const Scalar dsig = alpha * sig(i, j) * (1.0 - sig(i, j));
      dnum[j] += dn_dpihat[i] * dsig;
      dnum[i] -= dn_dpihat[i] * dsig;
    }
  }
  r.grad = -dnum / idcg;
  return r;
}

LossResult loss_stlistnet(const Vector& scores, const Vector& labels, Rng& rng,
                          const Vector* noise_override, ListNetTarget target) {
  Vector noise(scores.size());
  if (noise_override) {
    noise = *noise_override;
  } else {
    for (int i = 0; i < scores.size(); ++i) noise[i] = rng.gumbel();
  }
  // The perturbation is additive, so d loss / d scores is the ListNet
  // gradient evaluated at the perturbed scores.
  return loss_listnet_top1(scores + noise, labels, target);
}

LossResult compute_loss(const RankerSpec& spec, const Vector& scores, const Vector& labels,
                        Rng& rng) {
  switch (spec.kind) {
    case LossKind::RankMSE:
      return loss_rank_mse(scores, labels);
    case LossKind::RankNet:
      return loss_ranknet(scores, labels, spec.sigma);
    case LossKind::LambdaRank:
      return lambda_gradients(scores, labels, spec.sigma);
    case LossKind::ListNet:
      return loss_listnet_top1(scores, labels, spec.listnet_target);
    case LossKind::ListMLE:
      return loss_listmle(scores, labels);
    case LossKind::RankCosine:
      return loss_rankcosine(scores, labels);
    case LossKind::ApproxNDCG:
      return loss_approxndcg(scores, labels, spec.alpha);
    case LossKind::STListNet:
      return loss_stlistnet(scores, labels, rng, nullptr, spec.listnet_target);
  }
  throw std::logic_error("unreachable loss kind");
}

namespace {

Scalar vali_ndcg5(nn::ScoringNet& eval_net, const data::Dataset& dataset,
                  const std::vector<int>& vali_idx) {
  if (vali_idx.empty()) return 0.0;
  Scalar sum = 0;
  for (int gi : vali_idx) {
    const data::QueryGroup& g = dataset.groups[gi];
    const Vector scores = nn::forward(eval_net, g.features);
    const Permutation perm = metrics::rank_by_scores(scores);
    const Vector ranked = metrics::labels_in_rank_order(g.labels, perm);
    Vector ideal = g.labels;
    std::sort(ideal.data(), ideal.data() + ideal.size(), std::greater<Scalar>());
    sum += metrics::ndcg_at_k(ranked, ideal, 5);
  }
  return sum / static_cast<Scalar>(vali_idx.size());
}

}  // namespace

ErmResult train_erm(const RankerSpec& spec, nn::ScoringNet net, const data::Dataset& dataset,
                    const std::vector<int>& train_idx, const std::vector<int>& vali_idx,
                    const TrainOptions& options) {
  if (!dataset.groups.empty() && dataset.feature_dim != net.input_dim())
    throw std::invalid_argument("train_erm: dataset feature dim != net input dim");

  ErmResult result;
  nn::AdamState adam = nn::make_adam(net, options.lr, options.l2);
  Rng shuffle_rng(derive_seed(options.seed, "erm-shuffle"));
  Rng loss_rng(derive_seed(options.seed, "erm-loss"));

  std::vector<int> order = train_idx;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    Scalar loss_sum = 0;
    int counted = 0;
    for (int gi : order) {
      const data::QueryGroup& group = dataset.groups[gi];
      const int m = group.num_docs();
      if (options.skip_degenerate && net.use_batchnorm && m < 2) continue;

      Vector labels = group.labels;
      std::vector<int> active;
      if (spec.masked_label_policy == MaskedLabelPolicy::Zero) {
        for (int i = 0; i < m; ++i) {
          if (group.masked[i]) labels[i] = 0.0;
        }
      } else {
        for (int i = 0; i < m; ++i) {
          if (!group.masked[i]) active.push_back(i);
        }
        if (active.empty()) continue;
      }

      net.mode = nn::Mode::Train;
      nn::ForwardCache cache;
      const Vector scores = nn::forward(net, group.features, &cache);

      Vector grad_scores = Vector::Zero(m);
      LossResult lr;
      if (spec.masked_label_policy == MaskedLabelPolicy::Exclude &&
          static_cast<int>(active.size()) < m) {
        Vector sub_scores(active.size()), sub_labels(active.size());
        for (std::size_t i = 0; i < active.size(); ++i) {
          sub_scores[i] = scores[active[i]];
          sub_labels[i] = group.labels[active[i]];
        }
        lr = compute_loss(spec, sub_scores, sub_labels, loss_rng);
        for (std::size_t i = 0; i < active.size(); ++i) grad_scores[active[i]] = lr.grad[i];
      } else {
        lr = compute_loss(spec, scores, labels, loss_rng);
        grad_scores = lr.grad;
      }

      if (!std::isfinite(lr.loss)) {
        std::ostringstream os;
        os << "train_erm diverged: non-finite loss at epoch " << epoch << ", qid " << group.qid;
        throw TrainingDiverged(os.str());
      }
      loss_sum += lr.loss;
      ++counted;

      const nn::Gradients grads = nn::backward(net, cache, grad_scores);
      nn::adam_step(adam, net, grads);
    }

    nn::ScoringNet eval_net = net;
    eval_net.mode = nn::Mode::Eval;
    const Scalar vali = vali_ndcg5(eval_net, dataset, vali_idx);
    result.log.push_back({epoch, counted > 0 ? loss_sum / counted : 0.0, vali});
    if (result.best_epoch < 0 || vali > result.best_vali_ndcg5) {
      result.best_epoch = epoch;
      result.best_vali_ndcg5 = vali;
      result.best_net = net;
      result.best_adam = adam;
    }
  }

  if (result.best_epoch < 0) {
    result.best_net = net;  // epochs == 0: untrained net is the checkpoint
    result.best_adam = adam;
    result.best_epoch = 0;
  }
  result.final_net = std::move(net);
  result.final_adam = std::move(adam);
  return result;
}

void write_train_log_csv(std::ostream& os, const std::vector<EpochRow>& rows) {
  os << "epoch,loss_mean,vali_ndcg@5\n";
  char buf[64];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f", r.epoch, r.loss_mean, r.vali_ndcg5);
    os << buf << '\n';
  }
}

}  // namespace ltr::erm
