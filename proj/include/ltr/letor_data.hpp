#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ltr/types.hpp"

namespace ltr::data {

// One query's documents: feature rows, relevance labels, and mask flags
// (masked = label hidden from training). The unit of all loss and metric
// computation.
struct QueryGroup {
  std::string qid;
  Matrix features;  // m x d
  Vector labels;    // m
  ArrayXb masked;   // m

  int num_docs() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

struct Dataset {
  std::vector<QueryGroup> groups;
  int feature_dim = 0;
  Scalar label_max = 0;
  std::string provenance;

  int num_queries() const { return static_cast<int>(groups.size()); }
};

// Validates the QueryGroup/Dataset invariants; throws ParseError on violation.
void validate_dataset(const Dataset& dataset);

enum class CommentPolicy { Keep, Strip };

struct ParsedLine {
  Scalar label = 0;
  std::string qid;
  std::vector<std::pair<int, Scalar>> features;  // 1-based index, value
  std::string comment;                           // empty unless CommentPolicy::Keep
};

// Parses one LETOR/LibSVM line: `<label> qid:<q> <i>:<v> ... [# comment]`.
// Feature indices must be strictly increasing. Throws ParseError naming the
// line number and offending token.
ParsedLine parse_libsvm_line(std::string_view line, CommentPolicy policy, int line_number = 0);

// Canonical single-space rendering of a parsed line.
std::string serialize_libsvm_line(const ParsedLine& line);

// Dense row -> sparse (1-based index, value) pairs, explicit zeros dropped.
std::vector<std::pair<int, Scalar>> sparsify_row(const Vector& row);

enum class QidPolicy { Error, Merge };

// Loads a LibSVM/LETOR file into query groups. Missing sparse indices
// densify to 0. If feature_dim is unset, the maximum index seen wins.
// A qid that reappears after a different qid is an error under
// QidPolicy::Error and appended to its first group under QidPolicy::Merge.
Dataset load_dataset(const std::string& path, std::optional<int> feature_dim = std::nullopt,
                     QidPolicy qid_policy = QidPolicy::Error);

// Same, over already-parsed lines (load_dataset is a thin file wrapper).
Dataset build_dataset(const std::vector<ParsedLine>& lines, std::optional<int> feature_dim,
                      QidPolicy qid_policy, const std::string& provenance);

// Per-query z-score: each feature column standardized by that query's
// population mean/stddev; constant columns map to all-zeros.
QueryGroup zscore_normalize_query(const QueryGroup& group);

// Per-query min-max: x -> (x - min) / (max - min); degenerate columns -> 0.
QueryGroup minmax_normalize_query(const QueryGroup& group);

// Label y -> 1 if y >= threshold else 0; label_max becomes 1.
Dataset binarize_labels(const Dataset& dataset, Scalar threshold = 1.0);

// Marks exactly floor(ratio*m) documents per query as masked, chosen
// uniformly without replacement from a seed derived per query.
Dataset apply_random_mask(const Dataset& dataset, Scalar ratio, std::uint64_t seed);

struct FoldAssignment {
  std::vector<int> train;
  std::vector<int> vali;
  std::vector<int> test;
};

struct FoldPlan {
  int num_folds = 0;
  std::vector<FoldAssignment> folds;
};

// Shuffles the queries by seed into num_folds near-equal subsets and rotates
// roles so each subset is the test set exactly once; the remaining subsets
// split (num_folds-2):1 between train and validation.
FoldPlan make_folds(const Dataset& dataset, int num_folds, std::uint64_t seed);

}  // namespace ltr::data
