#pragma once

// Shared test utilities: brute-force metric oracles (independent of the
// library implementation), finite-difference gradient checking, and small
// statistics helpers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ltr/neural_core.hpp"
#include "ltr/types.hpp"

namespace ltrtest {

// ---------------------------------------------------------------------------
// Brute-force IR metric oracles over std::vector<double>, written against the
// textbook definitions: materialize the sorted list, sum term by term.

inline std::vector<double> oracle_rank_labels(const std::vector<double>& scores,
                                              const std::vector<double>& labels) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<double> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels[i]);
  return out;
}

inline double oracle_precision_at_k(const std::vector<double>& ranked, int k, double thr) {
  int hits = 0;
  for (std::size_t r = 0; r < ranked.size() && r < static_cast<std::size_t>(k); ++r) {
    if (ranked[r] >= thr) ++hits;
  }
  return static_cast<double>(hits) / k;
}

inline double oracle_average_precision(const std::vector<double>& ranked, double thr) {
  int relevant = 0;
  double sum = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (ranked[r] < thr) continue;
    ++relevant;
    // precision at rank r+1, recomputed from scratch
    int hits = 0;
    for (std::size_t i = 0; i <= r; ++i) {
      if (ranked[i] >= thr) ++hits;
    }
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return relevant == 0 ? 0.0 : sum / relevant;
}

inline double oracle_dcg_at_k(const std::vector<double>& ranked, int k) {
  double dcg = 0;
  for (std::size_t r = 0; r < ranked.size() && r < static_cast<std::size_t>(k); ++r) {
    dcg += (std::pow(2.0, ranked[r]) - 1.0) / (std::log(r + 2.0) / std::log(2.0));
  }
  return dcg;
}

inline double oracle_ndcg_at_k(const std::vector<double>& ranked, int k) {
  std::vector<double> ideal = ranked;
  std::sort(ideal.begin(), ideal.end(), std::greater<double>());
  const double idcg = oracle_dcg_at_k(ideal, k);
  if (idcg <= 0.0) return 0.0;
  return oracle_dcg_at_k(ranked, k) / idcg;
}

inline double oracle_err_at_k(const std::vector<double>& ranked, double label_max, int k) {
  double err = 0;
  double look = 1.0;
  for (std::size_t r = 0; r < ranked.size() && r < static_cast<std::size_t>(k); ++r) {
    const double stop = (std::pow(2.0, ranked[r]) - 1.0) / std::pow(2.0, label_max);
    err += look * stop / static_cast<double>(r + 1);
    look *= 1.0 - stop;
  }
  return err;
}

// ---------------------------------------------------------------------------
// Gradient checking

// Pass when |a - n| <= max(abs_tol, rel_tol * max(|a|, |n|)).
inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-4,
                       double abs_tol = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  return diff <= std::max(abs_tol, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

// Central finite differences of a scalar function of a score vector.
template <typename F>
ltr::Vector fd_score_gradient(const F& loss_value, const ltr::Vector& scores, double h = 1e-5) {
  ltr::Vector grad(scores.size());
  for (int i = 0; i < scores.size(); ++i) {
    ltr::Vector hi = scores, lo = scores;
    hi[i] += h;
    lo[i] -= h;
    grad[i] = (loss_value(hi) - loss_value(lo)) / (2.0 * h);
  }
  return grad;
}

// Flat parameter views over a net and its gradients, in matching order.
inline std::vector<double*> param_ptrs(ltr::nn::ScoringNet& net) {
  std::vector<double*> out;
  for (auto& w : net.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(w.data() + i);
  }
  for (auto& b : net.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(b.data() + i);
  }
  for (auto& bn : net.batchnorm) {
    for (Eigen::Index i = 0; i < bn.gamma.size(); ++i) out.push_back(bn.gamma.data() + i);
    for (Eigen::Index i = 0; i < bn.beta.size(); ++i) out.push_back(bn.beta.data() + i);
  }
  return out;
}

inline std::vector<const double*> grad_ptrs(const ltr::nn::Gradients& g) {
  std::vector<const double*> out;
  for (const auto& w : g.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(w.data() + i);
  }
  for (const auto& b : g.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(b.data() + i);
  }
  for (std::size_t l = 0; l < g.gamma.size(); ++l) {
    for (Eigen::Index i = 0; i < g.gamma[l].size(); ++i) out.push_back(g.gamma[l].data() + i);
    for (Eigen::Index i = 0; i < g.beta[l].size(); ++i) out.push_back(g.beta[l].data() + i);
  }
  return out;
}

struct NetGradCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0;
};

// Finite-difference check of backward() against sum_i upstream_i * score_i
// for every parameter. Train-mode RReLU uses the slopes frozen from the
// analytic forward pass.
inline NetGradCheck check_net_gradients(const ltr::nn::ScoringNet& base, const ltr::Matrix& x,
                                        const ltr::Vector& upstream, double h = 1e-5) {
  using ltr::nn::ForwardCache;
  using ltr::nn::ScoringNet;

  ScoringNet fwd = base;
  ForwardCache cache;
  ltr::nn::forward(fwd, x, &cache);
  const ltr::nn::Gradients grads = ltr::nn::backward(fwd, cache, upstream);
  const std::vector<ltr::Matrix> frozen = cache.rrelu_slope;
  const std::vector<ltr::Matrix>* frozen_ptr = frozen.empty() ? nullptr : &frozen;

  auto objective = [&](ScoringNet& net) {
    const ltr::Vector scores = ltr::nn::forward(net, x, nullptr, frozen_ptr);
    return upstream.dot(scores);
  };

  const std::vector<const double*> analytic = grad_ptrs(grads);
  const std::size_t num_params = analytic.size();

  NetGradCheck result;
  for (std::size_t p = 0; p < num_params; ++p) {
    // Fresh copies per probe keep batchnorm running stats and rng pristine.
    ScoringNet plus = base;
    *param_ptrs(plus)[p] += h;
    const double up = objective(plus);

    ScoringNet minus = base;
    *param_ptrs(minus)[p] -= h;
    const double down = objective(minus);

    const double numeric = (up - down) / (2.0 * h);
    const double a = *analytic[p];
    ++result.checked;
    if (!grad_close(a, numeric)) {
      ++result.failed;
      result.worst = std::max(result.worst, std::abs(a - numeric));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Statistics

// 0.999 quantile of the chi-square distribution (p > 0.001 test threshold),
// from standard tables.
inline double chi2_crit_999(int df) {
  switch (df) {
    case 5: return 20.515;
    case 23: return 49.728;
    default: return df + 3.1 * std::sqrt(2.0 * df) + 4.0;  // Wilson-Hilferty-ish fallback
  }
}

}  // namespace ltrtest
