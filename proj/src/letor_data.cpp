#include "ltr/letor_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ltr/rng.hpp"

namespace ltr::data {

namespace {

[[noreturn]] void parse_fail(int line_number, const std::string& what, std::string_view token = {}) {
  std::ostringstream os;
  os << "parse error at line " << line_number << ": " << what;
  if (!token.empty()) os << " (token \"" << token << "\")";
  throw ParseError(os.str());
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_real(std::string_view tok, Scalar& out) {
  // std::from_chars<double> handles the full decimal grammar; reject
  // trailing garbage ourselves.
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(std::string_view tok, int& out) {
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_real(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void validate_dataset(const Dataset& dataset) {
  std::unordered_map<std::string, int> seen;
  for (std::size_t g = 0; g < dataset.groups.size(); ++g) {
    const QueryGroup& q = dataset.groups[g];
    const int m = q.num_docs();
    if (m < 1) throw ParseError("query " + q.qid + " has no documents");
    if (q.feature_dim() != dataset.feature_dim)
      throw ParseError("query " + q.qid + " feature dim mismatch");
    if (q.labels.size() != m || q.masked.size() != m)
      throw ParseError("query " + q.qid + " labels/mask length mismatch");
    if (!q.labels.allFinite()) throw ParseError("query " + q.qid + " has non-finite labels");
    if (!seen.emplace(q.qid, static_cast<int>(g)).second)
      throw ParseError("duplicate qid " + q.qid);
  }
  if (dataset.feature_dim < 1) throw ParseError("feature dimension must be >= 1");
}

ParsedLine parse_libsvm_line(std::string_view line, CommentPolicy policy, int line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  std::string_view body = line;
  std::string comment;
  if (auto hash = line.find('#'); hash != std::string_view::npos) {
    if (policy == CommentPolicy::Keep) {
      comment = std::string(line.substr(hash + 1));
      if (!comment.empty() && comment.front() == ' ') comment.erase(comment.begin());
    }
    body = line.substr(0, hash);
  }

  const auto tokens = split_ws(body);
  if (tokens.empty()) parse_fail(line_number, "empty line");
  if (tokens.size() < 2) parse_fail(line_number, "missing qid field");

  ParsedLine out;
  out.comment = std::move(comment);
  if (!parse_real(tokens[0], out.label)) parse_fail(line_number, "malformed label", tokens[0]);

  if (tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4)
    parse_fail(line_number, "missing qid", tokens[1]);
  out.qid = std::string(tokens[1].substr(4));

  int prev_index = 0;
  for (std::size_t t = 2; t < tokens.size(); ++t) {
    const std::string_view tok = tokens[t];
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
      parse_fail(line_number, "malformed feature token", tok);
    int index = 0;
    Scalar value = 0;
    if (!parse_int(tok.substr(0, colon), index) || index < 1)
      parse_fail(line_number, "malformed feature index", tok);
    if (!parse_real(tok.substr(colon + 1), value))
      parse_fail(line_number, "malformed feature value", tok);
    if (index <= prev_index)
      parse_fail(line_number, "non-increasing feature index", tok);
    prev_index = index;
    out.features.emplace_back(index, value);
  }
  return out;
}

std::string serialize_libsvm_line(const ParsedLine& line) {
  std::string out = format_real(line.label);
  out += " qid:" + line.qid;
  for (const auto& [index, value] : line.features) {
    out += ' ';
    out += std::to_string(index);
    out += ':';
    out += format_real(value);
  }
  if (!line.comment.empty()) out += " # " + line.comment;
  return out;
}

std::vector<std::pair<int, Scalar>> sparsify_row(const Vector& row) {
  std::vector<std::pair<int, Scalar>> out;
  for (int j = 0; j < row.size(); ++j) {
    if (row[j] != 0.0) out.emplace_back(j + 1, row[j]);
  }
  return out;
}

Dataset build_dataset(const std::vector<ParsedLine>& lines, std::optional<int> feature_dim,
                      QidPolicy qid_policy, const std::string& provenance) {
  if (lines.empty()) throw ParseError("empty dataset: no parseable lines");

  int dim = feature_dim.value_or(0);
  if (!feature_dim) {
    for (const ParsedLine& l : lines) {
      if (!l.features.empty()) dim = std::max(dim, l.features.back().first);
    }
  }
  if (dim < 1) throw ParseError("could not infer feature dimension (no features present)");

  // Bucket lines by qid, preserving within-query document order. Consecutive
  // equal qids form one group; a qid reappearing later is an error unless the
  // merge policy is requested (Istella-style shuffled files).
  std::vector<std::pair<std::string, std::vector<const ParsedLine*>>> buckets;
  std::unordered_map<std::string, int> bucket_of;
  std::string current_qid;
  for (const ParsedLine& l : lines) {
    if (!buckets.empty() && l.qid == current_qid) {
      buckets[bucket_of[l.qid]].second.push_back(&l);
      continue;
    }
    auto it = bucket_of.find(l.qid);
    if (it != bucket_of.end()) {
      if (qid_policy == QidPolicy::Error)
        throw ParseError("qid " + l.qid + " reappears after a different qid (non-contiguous)");
      buckets[it->second].second.push_back(&l);
    } else {
      bucket_of.emplace(l.qid, static_cast<int>(buckets.size()));
      buckets.push_back({l.qid, {&l}});
    }
    current_qid = l.qid;
  }

  Dataset ds;
  ds.feature_dim = dim;
  ds.provenance = provenance;
  for (auto& [qid, rows] : buckets) {
    QueryGroup g;
    g.qid = qid;
    const int m = static_cast<int>(rows.size());
    g.features = Matrix::Zero(m, dim);
    g.labels = Vector::Zero(m);
    g.masked = ArrayXb::Constant(m, false);
    for (int i = 0; i < m; ++i) {
      g.labels[i] = rows[i]->label;
      for (const auto& [index, value] : rows[i]->features) {
        if (index > dim)
          throw ParseError("feature index " + std::to_string(index) + " exceeds dimension " +
                           std::to_string(dim) + " (qid " + qid + ")");
        g.features(i, index - 1) = value;
      }
    }
    ds.label_max = std::max(ds.label_max, g.labels.maxCoeff());
    ds.groups.push_back(std::move(g));
  }
  validate_dataset(ds);
  return ds;
}

Dataset load_dataset(const std::string& path, std::optional<int> feature_dim, QidPolicy qid_policy) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);

  std::vector<ParsedLine> lines;
  std::string raw;
  int line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    std::string_view view = raw;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;  // blank
    lines.push_back(parse_libsvm_line(view, CommentPolicy::Strip, line_number));
  }
  return build_dataset(lines, feature_dim, qid_policy, path);
}

QueryGroup zscore_normalize_query(const QueryGroup& group) {
  QueryGroup out = group;
  const int m = group.num_docs();
  const Eigen::RowVectorXd mean = group.features.colwise().mean();
  Matrix centered = group.features.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / m;
  for (int j = 0; j < group.feature_dim(); ++j) {
    if (var[j] > 0.0) {
      out.features.col(j) = centered.col(j) / std::sqrt(var[j]);
    } else {
      out.features.col(j).setZero();
    }
  }
  return out;
}

QueryGroup minmax_normalize_query(const QueryGroup& group) {
  QueryGroup out = group;
  const Eigen::RowVectorXd lo = group.features.colwise().minCoeff();
  const Eigen::RowVectorXd hi = group.features.colwise().maxCoeff();
  for (int j = 0; j < group.feature_dim(); ++j) {
    const Scalar span = hi[j] - lo[j];
    if (span > 0.0) {
      out.features.col(j) = (group.features.col(j).array() - lo[j]) / span;
    } else {
      out.features.col(j).setZero();
    }
  }
  return out;
}

Dataset binarize_labels(const Dataset& dataset, Scalar threshold) {
  if (!std::isfinite(threshold)) throw ConfigError("binarize threshold must be finite");
  Dataset out = dataset;
  for (QueryGroup& g : out.groups) {
    g.labels = (g.labels.array() >= threshold).cast<Scalar>();
  }
  out.label_max = 1.0;
  return out;
}

Dataset apply_random_mask(const Dataset& dataset, Scalar ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask ratio must lie in [0, 1]");
  Dataset out = dataset;
  for (std::size_t g = 0; g < out.groups.size(); ++g) {
    QueryGroup& group = out.groups[g];
    const int m = group.num_docs();
    // Small epsilon so floor(ratio*m) matches exact arithmetic when ratio*m
    // is representable only approximately (0.3 * 10 -> 2.999...).
    const int count = static_cast<int>(std::floor(ratio * m + 1e-9));
    group.masked = ArrayXb::Constant(m, false);
    if (count == 0) continue;
    Rng rng(derive_seed(seed, "mask-query", g));
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < count; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(m - i));
      std::swap(idx[i], idx[j]);
      group.masked[idx[i]] = true;
    }
  }
  return out;
}

FoldPlan make_folds(const Dataset& dataset, int num_folds, std::uint64_t seed) {
  const int n = dataset.num_queries();
  if (num_folds < 3) throw ConfigError("num_folds must be >= 3 (train/vali/test rotation)");
  if (n < num_folds) throw ConfigError("too few queries: " + std::to_string(n) + " < " +
                                       std::to_string(num_folds) + " folds");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "fold-shuffle"));
  rng.shuffle(order);

  // Near-equal contiguous chunks of the shuffled order; the first n % F
  // chunks take one extra query.
  std::vector<std::vector<int>> chunks(num_folds);
  const int base = n / num_folds;
  const int extra = n % num_folds;
  int pos = 0;
  for (int c = 0; c < num_folds; ++c) {
    const int size = base + (c < extra ? 1 : 0);
    chunks[c].assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }

  FoldPlan plan;
  plan.num_folds = num_folds;
  for (int f = 0; f < num_folds; ++f) {
    FoldAssignment fold;
    for (int offset = 0; offset < num_folds - 2; ++offset) {
      const auto& chunk = chunks[(f + offset) % num_folds];
      fold.train.insert(fold.train.end(), chunk.begin(), chunk.end());
    }
    fold.vali = chunks[(f + num_folds - 2) % num_folds];
    fold.test = chunks[(f + num_folds - 1) % num_folds];
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace ltr::data
