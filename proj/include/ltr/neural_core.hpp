#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltr/rng.hpp"
#include "ltr/types.hpp"

namespace ltr::nn {

enum class Activation { ReLU, LeakyReLU, RReLU, ELU, SELU, CELU, Sigmoid };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
const std::vector<std::string>& activation_names();

enum class Mode { Train, Eval };

// RReLU negative-slope bounds and the fixed eval-mode slope (their midpoint).
inline constexpr Scalar kRReluLower = 1.0 / 8.0;
inline constexpr Scalar kRReluUpper = 1.0 / 3.0;
inline constexpr Scalar kRReluEvalSlope = (kRReluLower + kRReluUpper) / 2.0;

inline constexpr Scalar kSeluLambda = 1.0507009873554805;
inline constexpr Scalar kSeluAlpha = 1.6732632423543772;

struct BatchNormState {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  Scalar momentum = 0.1;  // running = (1-momentum)*running + momentum*batch
  Scalar eps = 1e-5;
};

// Feed-forward scoring function over document feature rows. layer_dims is
// [d, h_1, ..., h_L, 1]; "N-layer" means N weight matrices. Batchnorm, when
// enabled, sits between each hidden affine map and its activation; the
// output layer is linear.
struct ScoringNet {
  std::vector<int> layer_dims;
  Activation activation = Activation::ReLU;
  bool use_batchnorm = false;
  std::vector<Matrix> weights;  // in x out
  std::vector<Vector> biases;
  std::vector<BatchNormState> batchnorm;  // one per hidden layer when enabled
  Mode mode = Mode::Train;
  Rng rng{0};

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
};

// Glorot-uniform initialized net, seeded. layer_dims must start at the input
// dim and end at 1.
ScoringNet make_scoring_net(const std::vector<int>& layer_dims, Activation activation,
                            bool use_batchnorm, std::uint64_t seed);

// Convenience shape helper: `layers` weight matrices, all hidden widths equal.
std::vector<int> mlp_dims(int input_dim, int layers, int hidden);

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> affine_out;   // z = a_prev * W + b, per layer
  std::vector<Matrix> act_in;       // affine (post-batchnorm) input to the activation
  std::vector<Matrix> act_out;      // activation output, per hidden layer
  std::vector<Matrix> rrelu_slope;  // sampled negative slopes, train-mode RReLU only
  std::vector<Matrix> bn_xhat;
  std::vector<Vector> bn_inv_std;
  Mode mode = Mode::Eval;
};

// Elementwise activation. Train-mode RReLU samples per-element negative
// slopes from rng (recorded in slope_out when given); eval mode uses the
// fixed midpoint slope.
Matrix apply_activation(Activation kind, const Matrix& pre, Mode mode, Rng& rng,
                        Matrix* slope_out = nullptr);

// Train mode standardizes by the batch's population statistics and updates
// the running ones; eval mode standardizes by the running statistics.
// Train mode requires m >= 2 rows.
Matrix batchnorm_forward(BatchNormState& state, const Matrix& pre, Mode mode,
                         Matrix* xhat_out = nullptr, Vector* inv_std_out = nullptr);

// Scores one query's feature rows. Train mode mutates batchnorm running
// stats and the RReLU rng. When frozen_rrelu_slopes is given, those slopes
// are used instead of sampling (gradient-check support).
Vector forward(ScoringNet& net, const Matrix& features, ForwardCache* cache = nullptr,
               const std::vector<Matrix>* frozen_rrelu_slopes = nullptr);

// Eval-mode scoring of a const net; deterministic and side-effect free.
Vector score_eval(const ScoringNet& net, const Matrix& features);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::vector<Vector> gamma;
  std::vector<Vector> beta;
};

Gradients zero_gradients(const ScoringNet& net);

// Exact gradients of sum_i upstream[i] * score[i] w.r.t. every parameter,
// using the cache of the matching forward call.
Gradients backward(const ScoringNet& net, const ForwardCache& cache, const Vector& upstream);

struct AdamState {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 1e-3;  // classic L2: grad += lambda * param
  std::int64_t step = 0;
  Gradients m;
  Gradients v;
};

AdamState make_adam(const ScoringNet& net, Scalar lr, Scalar weight_decay);

// One bias-corrected Adam update over all net parameters. Throws
// TrainingDiverged on non-finite gradients or parameters.
void adam_step(AdamState& state, ScoringNet& net, const Gradients& grads);

// Versioned binary checkpoint of net + optimizer, sufficient to resume
// training bit-exactly.
void save_checkpoint(std::ostream& os, const ScoringNet& net, const AdamState& adam);
void save_checkpoint(const std::string& path, const ScoringNet& net, const AdamState& adam);
std::pair<ScoringNet, AdamState> load_checkpoint(std::istream& is);
std::pair<ScoringNet, AdamState> load_checkpoint(const std::string& path);

}  // namespace ltr::nn
