#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace ltr {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using ArrayXb = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Bijection over a query's documents. forward[i] is the 1-based rank of
// document i; inverse[r-1] is the document index placed at rank r.
struct Permutation {
  std::vector<int> forward;
  std::vector<int> inverse;

  int size() const { return static_cast<int>(forward.size()); }
  int rank_of(int doc) const { return forward[doc]; }
  int doc_at_rank(int rank) const { return inverse[rank - 1]; }
};

inline bool is_valid_permutation(const Permutation& p) {
  const int m = p.size();
  if (static_cast<int>(p.inverse.size()) != m) return false;
  for (int i = 0; i < m; ++i) {
    if (p.forward[i] < 1 || p.forward[i] > m) return false;
    if (p.inverse[p.forward[i] - 1] != i) return false;
  }
  return true;
}

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ltr
