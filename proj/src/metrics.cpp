#include "ltr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

#include "ltr/rng.hpp"

namespace ltr::metrics {

namespace {

Scalar gain(Scalar label) { return std::pow(2.0, label) - 1.0; }
Scalar discount(int rank) { return 1.0 / std::log2(rank + 1.0); }

Vector sorted_desc(const Vector& labels) {
  Vector out = labels;
  std::sort(out.data(), out.data() + out.size(), std::greater<Scalar>());
  return out;
}

}  // namespace

Permutation rank_by_scores(const Vector& scores, TieBreak tie_break, std::uint64_t seed) {
  const int m = static_cast<int>(scores.size());
  for (int i = 0; i < m; ++i) {
    if (std::isnan(scores[i])) throw std::invalid_argument("rank_by_scores: NaN score");
  }
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  if (tie_break == TieBreak::Seeded) {
    Rng rng(derive_seed(seed, "tie-break"));
    rng.shuffle(order);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  Permutation p;
  p.inverse = order;
  p.forward.resize(m);
  for (int r = 0; r < m; ++r) p.forward[order[r]] = r + 1;
  return p;
}

Vector labels_in_rank_order(const Vector& labels, const Permutation& perm) {
  Vector out(labels.size());
  for (int r = 0; r < labels.size(); ++r) out[r] = labels[perm.inverse[r]];
  return out;
}

Scalar precision_at_k(const Vector& ranked_labels, int k, Scalar relevance_threshold) {
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  const int depth = std::min<int>(k, static_cast<int>(ranked_labels.size()));
  int hits = 0;
  for (int r = 0; r < depth; ++r) {
    if (ranked_labels[r] >= relevance_threshold) ++hits;
  }
  return static_cast<Scalar>(hits) / k;
}

Scalar average_precision(const Vector& ranked_labels, Scalar relevance_threshold) {
  const int m = static_cast<int>(ranked_labels.size());
  int hits = 0;
  Scalar sum = 0;
  for (int r = 0; r < m; ++r) {
    if (ranked_labels[r] >= relevance_threshold) {
      ++hits;
      sum += static_cast<Scalar>(hits) / (r + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / hits;
}

Scalar dcg_at_k(const Vector& ranked_labels, int k) {
  const int depth = std::min<int>(k, static_cast<int>(ranked_labels.size()));
  Scalar dcg = 0;
  for (int r = 1; r <= depth; ++r) dcg += gain(ranked_labels[r - 1]) * discount(r);
  return dcg;
}

Scalar ndcg_at_k(const Vector& ranked_labels, const Vector& ideal_labels_sorted_desc, int k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  Vector check = sorted_desc(ranked_labels);
  if (check.size() != ideal_labels_sorted_desc.size() ||
      !(check.array() == ideal_labels_sorted_desc.array()).all()) {
    throw std::invalid_argument("ndcg_at_k: ideal vector is not the sorted label multiset");
  }
  const Scalar idcg = dcg_at_k(ideal_labels_sorted_desc, k);
  if (idcg <= 0.0) return 0.0;
  return dcg_at_k(ranked_labels, k) / idcg;
}

Scalar err_at_k(const Vector& ranked_labels, Scalar label_max, int k) {
  if (label_max < 1) throw std::invalid_argument("err_at_k: label_max must be >= 1");
  const int depth = std::min<int>(k, static_cast<int>(ranked_labels.size()));
  const Scalar denom = std::pow(2.0, label_max);
  Scalar err = 0;
  Scalar not_satisfied = 1.0;
  for (int r = 1; r <= depth; ++r) {
    const Scalar label = ranked_labels[r - 1];
    if (label < 0 || label > label_max)
      throw std::invalid_argument("err_at_k: label outside [0, label_max]");
    const Scalar stop = gain(label) / denom;
    err += not_satisfied * stop / r;
    not_satisfied *= (1.0 - stop);
  }
  return err;
}

Scalar nerr_at_k(const Vector& ranked_labels, const Vector& ideal_labels_sorted_desc,
                 Scalar label_max, int k) {
  const Scalar ideal = err_at_k(ideal_labels_sorted_desc, label_max, k);
  if (ideal <= 0.0) return 0.0;
  return err_at_k(ranked_labels, label_max, k) / ideal;
}

Scalar MetricReport::mean(const std::string& metric, int cutoff) const {
  auto it = values.find({metric, cutoff});
  if (it == values.end())
    throw std::out_of_range("no metric entry for " + metric + "@" + std::to_string(cutoff));
  return it->second.mean;
}

MetricReport evaluate_groups(const ScoreFn& score, const data::Dataset& dataset,
                             const std::vector<int>& group_indices, const EvalOptions& options) {
  MetricReport report;
  report.query_count = static_cast<int>(group_indices.size());

  std::vector<std::pair<std::string, int>> keys;
  for (int k : options.cutoffs) {
    keys.emplace_back("P", k);
    keys.emplace_back("nDCG", k);
    keys.emplace_back("ERR", k);
    keys.emplace_back("nERR", k);
  }
  keys.emplace_back("AP", 0);
  for (const auto& key : keys) report.values[key];

  for (int gi : group_indices) {
    const data::QueryGroup& group = dataset.groups[gi];
    const Vector scores = score(group);
    const Permutation perm = rank_by_scores(scores, options.tie_break, gi);
    const Vector ranked = labels_in_rank_order(group.labels, perm);
    const Vector ideal = [&] {
      Vector s = group.labels;
      std::sort(s.data(), s.data() + s.size(), std::greater<Scalar>());
      return s;
    }();
    const bool has_relevant = ideal.size() > 0 && ideal[0] > 0;
    const Scalar label_max = std::max<Scalar>(options.label_max, 1.0);

    for (int k : options.cutoffs) {
      report.values[{"P", k}].per_query.push_back(
          precision_at_k(ranked, k, options.relevance_threshold));
      report.values[{"nDCG", k}].per_query.push_back(ndcg_at_k(ranked, ideal, k));
      report.values[{"ERR", k}].per_query.push_back(err_at_k(ranked, label_max, k));
      report.values[{"nERR", k}].per_query.push_back(nerr_at_k(ranked, ideal, label_max, k));
    }
    report.values[{"AP", 0}].per_query.push_back(
        average_precision(ranked, options.relevance_threshold));

    // Queries with no relevant document always score 0 on the normalized
    // metrics; the exclude flag drops them from the mean instead (recorded
    // as NaN so the per-query vector keeps its alignment).
    if (options.exclude_zero_relevance && !has_relevant) {
      for (const auto& key : keys) {
        if (key.first == "nDCG" || key.first == "nERR")
          report.values[key].per_query.back() = std::nan("");
      }
    }
  }

  for (auto& [key, entry] : report.values) {
    Scalar sum = 0;
    int n = 0;
    for (Scalar v : entry.per_query) {
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    entry.mean = n > 0 ? sum / n : 0.0;
  }
  return report;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  MetricReport out;
  if (reports.empty()) return out;
  for (const auto& [key, entry] : reports.front().values) {
    MetricReport::Entry agg;
    Scalar sum = 0;
    for (const MetricReport& r : reports) {
      const Scalar v = r.values.at(key).mean;
      agg.per_query.push_back(v);
      sum += v;
    }
    agg.mean = sum / reports.size();
    out.values.emplace(key, std::move(agg));
  }
  for (const MetricReport& r : reports) out.query_count += r.query_count;
  return out;
}

void write_report_csv(std::ostream& os, const MetricReport& report, const std::string& fold,
                      const std::string& split, bool header) {
  if (header) os << "fold,split,metric,cutoff,value,query_count\n";
  char buf[32];
  for (const auto& [key, entry] : report.values) {
    std::snprintf(buf, sizeof(buf), "%.6f", entry.mean);
    os << fold << ',' << split << ',' << key.first << ',' << key.second << ',' << buf << ','
       << report.query_count << '\n';
  }
}

}  // namespace ltr::metrics
