#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ltr/letor_data.hpp"
#include "ltr/types.hpp"

namespace ltr::metrics {

enum class TieBreak { ByIndex, Seeded };

// Descending stable sort of documents by score. Ties keep original index
// order (ByIndex) or a seeded shuffle (Seeded). Throws on NaN scores.
Permutation rank_by_scores(const Vector& scores, TieBreak tie_break = TieBreak::ByIndex,
                           std::uint64_t seed = 0);

// Reorders labels into rank order: out[r-1] = labels[perm.inverse[r-1]].
Vector labels_in_rank_order(const Vector& labels, const Permutation& perm);

// Fraction of the top min(k, m) documents with label >= threshold, divided
// by k (not by min(k, m)).
Scalar precision_at_k(const Vector& ranked_labels, int k, Scalar relevance_threshold = 1.0);

// Mean over relevant ranks r of precision@r at full depth; 0 with no
// relevant document.
Scalar average_precision(const Vector& ranked_labels, Scalar relevance_threshold = 1.0);

Scalar dcg_at_k(const Vector& ranked_labels, int k);

// DCG@k / ideal DCG@k with gain 2^label - 1 and discount log2(r+1);
// defined as 0 when the ideal DCG is 0. ideal_labels_sorted_desc must be
// the label multiset sorted descending (throws otherwise).
Scalar ndcg_at_k(const Vector& ranked_labels, const Vector& ideal_labels_sorted_desc, int k);

// Cascade-model expected reciprocal rank with satisfaction probability
// (2^label - 1) / 2^label_max.
Scalar err_at_k(const Vector& ranked_labels, Scalar label_max, int k);

// ERR@k normalized by the ideal ERR@k; 0 when the ideal is 0.
Scalar nerr_at_k(const Vector& ranked_labels, const Vector& ideal_labels_sorted_desc,
                 Scalar label_max, int k);

// Per-query metric values keyed by (metric name, cutoff) plus their mean.
// Cutoff 0 marks full-depth metrics (AP).
struct MetricReport {
  struct Entry {
    std::vector<Scalar> per_query;
    Scalar mean = 0;
  };
  std::map<std::pair<std::string, int>, Entry> values;
  int query_count = 0;

  Scalar mean(const std::string& metric, int cutoff) const;
};

struct EvalOptions {
  std::vector<int> cutoffs{1, 3, 5, 10, 20, 50};
  Scalar relevance_threshold = 1.0;
  Scalar label_max = 4.0;
  // When true, queries with no relevant document are dropped from nDCG/nERR
  // means instead of counting as zeros.
  bool exclude_zero_relevance = false;
  TieBreak tie_break = TieBreak::ByIndex;
};

using ScoreFn = std::function<Vector(const data::QueryGroup&)>;

// Scores every selected group, ranks, and fills P/AP/nDCG/ERR/nERR rows.
MetricReport evaluate_groups(const ScoreFn& score, const data::Dataset& dataset,
                             const std::vector<int>& group_indices, const EvalOptions& options);

// Fold-averaged report: entry-wise arithmetic mean over per-fold means.
MetricReport average_reports(const std::vector<MetricReport>& reports);

// CSV rows `fold,split,metric,cutoff,value,query_count`, values with 6
// decimals, in deterministic key order.
void write_report_csv(std::ostream& os, const MetricReport& report, const std::string& fold,
                      const std::string& split, bool header = true);

}  // namespace ltr::metrics
