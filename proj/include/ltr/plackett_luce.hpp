#pragma once

#include <vector>

#include "ltr/types.hpp"

namespace ltr {

// Log-probability of drawing the given top-k ranking (ordered document
// indices) under the Plackett-Luce model with utilities scores/temperature:
// each position is a softmax choice over the not-yet-placed documents,
// including documents beyond the top k. Log-sum-exp is max-shifted.
Scalar pl_log_prob(const Vector& scores, const std::vector<int>& ranking, Scalar temperature);

// Same, plus the exact gradient of the log-probability w.r.t. every score.
std::pair<Scalar, Vector> pl_log_prob_grad(const Vector& scores, const std::vector<int>& ranking,
                                           Scalar temperature);

// All ordered top-k selections from {0..m-1}; m!/(m-k)! entries.
std::vector<std::vector<int>> enumerate_topk_rankings(int m, int k);

}  // namespace ltr
