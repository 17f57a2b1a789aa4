#include "ltr/plackett_luce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace ltr {

namespace {

void check_ranking(const Vector& scores, const std::vector<int>& ranking, Scalar temperature) {
  const int m = static_cast<int>(scores.size());
  if (temperature <= 0) throw std::invalid_argument("pl_log_prob: temperature must be > 0");
  if (static_cast<int>(ranking.size()) > m)
    throw std::invalid_argument("pl_log_prob: ranking longer than document count");
  std::vector<char> seen(m, 0);
  for (int idx : ranking) {
    if (idx < 0 || idx >= m) throw std::invalid_argument("pl_log_prob: index out of range");
    if (seen[idx]) throw std::invalid_argument("pl_log_prob: duplicate index in ranking");
    seen[idx] = 1;
  }
  if (!scores.allFinite()) throw std::invalid_argument("pl_log_prob: non-finite scores");
}

}  // namespace

Scalar pl_log_prob(const Vector& scores, const std::vector<int>& ranking, Scalar temperature) {
  check_ranking(scores, ranking, temperature);
  const int m = static_cast<int>(scores.size());
  const Vector s = scores / temperature;

  std::vector<int> remaining(m);
  for (int i = 0; i < m; ++i) remaining[i] = i;

  Scalar logp = 0;
  for (int chosen : ranking) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (int idx : remaining) hi = std::max(hi, s[idx]);
    Scalar denom = 0;
    for (int idx : remaining) denom += std::exp(s[idx] - hi);
    logp += (s[chosen] - hi) - std::log(denom);
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
  }
  return logp;
}

std::pair<Scalar, Vector> pl_log_prob_grad(const Vector& scores, const std::vector<int>& ranking,
                                           Scalar temperature) {
  check_ranking(scores, ranking, temperature);
  const int m = static_cast<int>(scores.size());
  const Vector s = scores / temperature;

  std::vector<int> remaining(m);
  for (int i = 0; i < m; ++i) remaining[i] = i;

  Scalar logp = 0;
  Vector grad = Vector::Zero(m);
  for (int chosen : ranking) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (int idx : remaining) hi = std::max(hi, s[idx]);
    Scalar denom = 0;
    for (int idx : remaining) denom += std::exp(s[idx] - hi);
    logp += (s[chosen] - hi) - std::log(denom);
    grad[chosen] += 1.0 / temperature;
    for (int idx : remaining) {
      grad[idx] -= std::exp(s[idx] - hi) / denom / temperature;
    }
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
  }
  return {logp, std::move(grad)};
}

std::vector<std::vector<int>> enumerate_topk_rankings(int m, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> prefix;
  std::vector<char> used(m, 0);
  auto recurse = [&](auto&& self) -> void {
    if (static_cast<int>(prefix.size()) == k) {
      out.push_back(prefix);
      return;
    }
    for (int i = 0; i < m; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      prefix.push_back(i);
      self(self);
      prefix.pop_back();
      used[i] = 0;
    }
  };
  recurse(recurse);
  return out;
}

}  // namespace ltr
