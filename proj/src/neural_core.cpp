#include "ltr/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ltr::nn {

namespace {

using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const std::vector<std::string> kActivationNames = {"ReLU", "LeakyReLU", "RReLU", "ELU",
                                                   "SELU", "CELU",      "Sigmoid"};

constexpr Scalar kLeakySlope = 0.01;

}  // namespace

Activation activation_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kActivationNames.size(); ++i) {
    if (kActivationNames[i] == name) return static_cast<Activation>(i);
  }
  std::string valid;
  for (const auto& n : kActivationNames) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown activation \"" + name + "\"; valid kinds: " + valid);
}

std::string to_string(Activation a) { return kActivationNames[static_cast<int>(a)]; }

const std::vector<std::string>& activation_names() { return kActivationNames; }

std::vector<int> mlp_dims(int input_dim, int layers, int hidden) {
  std::vector<int> dims{input_dim};
  for (int l = 0; l < layers - 1; ++l) dims.push_back(hidden);
  dims.push_back(1);
  return dims;
}

ScoringNet make_scoring_net(const std::vector<int>& layer_dims, Activation activation,
                            bool use_batchnorm, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ConfigError("net needs at least one weight matrix");
  if (layer_dims.back() != 1) throw ConfigError("output dimension must be exactly 1");
  for (int d : layer_dims) {
    if (d < 1) throw ConfigError("layer widths must be >= 1");
  }

  ScoringNet net;
  net.layer_dims = layer_dims;
  net.activation = activation;
  net.use_batchnorm = use_batchnorm;
  net.rng = Rng(derive_seed(seed, "net-init"));

  const int layers = static_cast<int>(layer_dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const Scalar bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) w(i, j) = net.rng.uniform(-bound, bound);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
  }
  if (use_batchnorm) {
    for (int l = 0; l < layers - 1; ++l) {
      BatchNormState bn;
      const int h = layer_dims[l + 1];
      bn.gamma = Vector::Ones(h);
      bn.beta = Vector::Zero(h);
      bn.running_mean = Vector::Zero(h);
      bn.running_var = Vector::Ones(h);
      net.batchnorm.push_back(std::move(bn));
    }
  }
  return net;
}

Matrix apply_activation(Activation kind, const Matrix& pre, Mode mode, Rng& rng,
                        Matrix* slope_out) {
  const Array x = pre.array();
  Array y;
  switch (kind) {
    case Activation::ReLU:
      y = x.max(0.0);
      break;
    case Activation::LeakyReLU:
      y = (x >= 0.0).select(x, kLeakySlope * x);
      break;
    case Activation::RReLU: {
      if (mode == Mode::Eval) {
        y = (x >= 0.0).select(x, kRReluEvalSlope * x);
        break;
      }
      Array slope(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          slope(i, j) = rng.uniform(kRReluLower, kRReluUpper);
      }
      if (slope_out) *slope_out = slope.matrix();
      y = (x >= 0.0).select(x, slope * x);
      break;
    }
    case Activation::ELU:
      y = (x >= 0.0).select(x, x.exp() - 1.0);
      break;
    case Activation::SELU:
      y = kSeluLambda * (x >= 0.0).select(x, kSeluAlpha * (x.exp() - 1.0));
      break;
    case Activation::CELU:
      // alpha = 1: x if x >= 0 else exp(x/alpha) - 1
      y = (x >= 0.0).select(x, x.exp() - 1.0);
      break;
    case Activation::Sigmoid:
      y = 1.0 / (1.0 + (-x).exp());
      break;
  }
  return y.matrix();
}

namespace {

// Elementwise activation derivative from the activation's input (and the
// slopes sampled in forward, for train-mode RReLU).
Matrix activation_derivative(Activation kind, const Matrix& act_in, Mode mode,
                             const Matrix* rrelu_slope) {
  const Array x = act_in.array();
  const Array ones = Array::Ones(x.rows(), x.cols());
  Array d;
  switch (kind) {
    case Activation::ReLU:
      d = (x >= 0.0).select(ones, 0.0);
      break;
    case Activation::LeakyReLU:
      d = (x >= 0.0).select(ones, kLeakySlope);
      break;
    case Activation::RReLU:
      if (mode == Mode::Eval || rrelu_slope == nullptr) {
        d = (x >= 0.0).select(ones, kRReluEvalSlope);
      } else {
        d = (x >= 0.0).select(ones, rrelu_slope->array());
      }
      break;
    case Activation::ELU:
      d = (x >= 0.0).select(ones, x.exp());
      break;
    case Activation::SELU:
      d = kSeluLambda * (x >= 0.0).select(ones, kSeluAlpha * x.exp());
      break;
    case Activation::CELU:
      d = (x >= 0.0).select(ones, x.exp());
      break;
    case Activation::Sigmoid: {
      const Array s = 1.0 / (1.0 + (-x).exp());
      d = s * (1.0 - s);
      break;
    }
  }
  return d.matrix();
}

}  // namespace

Matrix batchnorm_forward(BatchNormState& state, const Matrix& pre, Mode mode, Matrix* xhat_out,
                         Vector* inv_std_out) {
  const Scalar m = static_cast<Scalar>(pre.rows());
  Vector mean, var;
  if (mode == Mode::Train) {
    if (pre.rows() < 2)
      throw std::invalid_argument("batchnorm_forward: train mode needs m >= 2 (batch variance)");
    mean = pre.colwise().mean().transpose();
    const Matrix centered = pre.rowwise() - mean.transpose();
    var = (centered.array().square().colwise().sum() / m).matrix().transpose();
    state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var;
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  const Vector inv_std = (var.array() + state.eps).rsqrt().matrix();
  const Matrix centered = pre.rowwise() - mean.transpose();
  const Matrix xhat = (centered.array().rowwise() * inv_std.transpose().array()).matrix();
  if (xhat_out) *xhat_out = xhat;
  if (inv_std_out) *inv_std_out = inv_std;
  Matrix out = (xhat.array().rowwise() * state.gamma.transpose().array()).matrix();
  out.rowwise() += state.beta.transpose();
  return out;
}

Vector forward(ScoringNet& net, const Matrix& features, ForwardCache* cache,
               const std::vector<Matrix>* frozen_rrelu_slopes) {
  if (features.cols() != net.input_dim()) {
    std::ostringstream os;
    os << "forward: feature dim " << features.cols() << " != net input dim " << net.input_dim();
    throw std::invalid_argument(os.str());
  }
  const int layers = net.num_layers();
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.mode = net.mode;
  c.input = features;

  Matrix a = features;
  for (int l = 0; l < layers; ++l) {
    Matrix z = a * net.weights[l];
    z.rowwise() += net.biases[l].transpose();
    c.affine_out.push_back(z);
    if (l == layers - 1) {
      a = std::move(z);  // linear output layer
      break;
    }
    Matrix act_in;
    if (net.use_batchnorm) {
      Matrix xhat;
      Vector inv_std;
      act_in = batchnorm_forward(net.batchnorm[l], z, net.mode, &xhat, &inv_std);
      c.bn_xhat.push_back(std::move(xhat));
      c.bn_inv_std.push_back(std::move(inv_std));
    } else {
      act_in = std::move(z);
    }
    c.act_in.push_back(act_in);

    if (net.activation == Activation::RReLU && net.mode == Mode::Train) {
      Matrix slope;
      if (frozen_rrelu_slopes) {
        slope = (*frozen_rrelu_slopes)[l];
        a = ((act_in.array() >= 0.0).select(act_in.array(), slope.array() * act_in.array()))
                .matrix();
      } else {
        a = apply_activation(net.activation, act_in, net.mode, net.rng, &slope);
      }
      c.rrelu_slope.push_back(std::move(slope));
    } else {
      a = apply_activation(net.activation, act_in, net.mode, net.rng);
    }
    c.act_out.push_back(a);
  }

  Vector scores = a.col(0);
  if (!scores.allFinite()) throw TrainingDiverged("forward produced non-finite scores");
  return scores;
}

Vector score_eval(const ScoringNet& net, const Matrix& features) {
  ScoringNet copy = net;
  copy.mode = Mode::Eval;
  return forward(copy, features);
}

Gradients zero_gradients(const ScoringNet& net) {
  Gradients g;
  for (const Matrix& w : net.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const Vector& b : net.biases) g.biases.push_back(Vector::Zero(b.size()));
  for (const BatchNormState& bn : net.batchnorm) {
    g.gamma.push_back(Vector::Zero(bn.gamma.size()));
    g.beta.push_back(Vector::Zero(bn.beta.size()));
  }
  return g;
}

Gradients backward(const ScoringNet& net, const ForwardCache& cache, const Vector& upstream) {
  const int layers = net.num_layers();
  if (static_cast<int>(cache.affine_out.size()) != layers ||
      cache.input.rows() != upstream.size())
    throw std::invalid_argument("backward: cache does not match net/upstream (stale cache?)");

  Gradients g = zero_gradients(net);
  Matrix dz = upstream;  // m x 1, gradient on the output affine

  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& a_prev = (l == 0) ? cache.input : cache.act_out[l - 1];
    g.weights[l] = a_prev.transpose() * dz;
    g.biases[l] = dz.colwise().sum().transpose();
    if (l == 0) break;

    const Matrix da = dz * net.weights[l].transpose();  // grad on act_out[l-1]
    const int h = l - 1;                                // hidden-layer index
    const Matrix* slope =
        (net.activation == Activation::RReLU && cache.mode == Mode::Train &&
         static_cast<int>(cache.rrelu_slope.size()) > h)
            ? &cache.rrelu_slope[h]
            : nullptr;
    const Matrix dact_in =
        da.cwiseProduct(activation_derivative(net.activation, cache.act_in[h], cache.mode, slope));

    if (net.use_batchnorm) {
      const BatchNormState& bn = net.batchnorm[h];
      const Matrix& xhat = cache.bn_xhat[h];
      const Vector& inv_std = cache.bn_inv_std[h];
      g.gamma[h] = (dact_in.array() * xhat.array()).colwise().sum().matrix().transpose();
      g.beta[h] = dact_in.colwise().sum().transpose();

      const Matrix dxhat = (dact_in.array().rowwise() * bn.gamma.transpose().array()).matrix();
      if (cache.mode == Mode::Train) {
        // Gradient through the batch statistics (population variance).
        const Scalar m = static_cast<Scalar>(dxhat.rows());
        const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat =
            (dxhat.array() * xhat.array()).colwise().sum().matrix();
        Matrix tmp = m * dxhat;
        tmp.rowwise() -= sum_dxhat;
        tmp -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        dz = ((tmp.array().rowwise() * inv_std.transpose().array()) / m).matrix();
      } else {
        dz = (dxhat.array().rowwise() * inv_std.transpose().array()).matrix();
      }
    } else {
      dz = dact_in;
    }
  }
  return g;
}

AdamState make_adam(const ScoringNet& net, Scalar lr, Scalar weight_decay) {
  AdamState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  s.m = zero_gradients(net);
  s.v = zero_gradients(net);
  return s;
}

namespace {

template <typename Param>
void adam_update(AdamState& s, Param& param, const Param& grad, Param& m, Param& v, Scalar bc1,
                 Scalar bc2) {
  if (!grad.allFinite()) throw TrainingDiverged("adam_step: non-finite gradient");
  Param g = grad;
  if (s.weight_decay != 0.0) g += s.weight_decay * param;
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = (s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square()).matrix();
  param.array() -= s.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
  if (!param.allFinite()) throw TrainingDiverged("adam_step: parameters diverged");
}

}  // namespace

void adam_step(AdamState& state, ScoringNet& net, const Gradients& grads) {
  state.step += 1;
  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step));
  for (int l = 0; l < net.num_layers(); ++l) {
    adam_update(state, net.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l],
                bc1, bc2);
    adam_update(state, net.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l], bc1,
                bc2);
  }
  for (std::size_t h = 0; h < net.batchnorm.size(); ++h) {
    adam_update(state, net.batchnorm[h].gamma, grads.gamma[h], state.m.gamma[h], state.v.gamma[h],
                bc1, bc2);
    adam_update(state, net.batchnorm[h].beta, grads.beta[h], state.m.beta[h], state.v.beta[h],
                bc1, bc2);
  }
}

namespace {

constexpr char kMagic[8] = {'L', 'T', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  os.write(buf, 8);
}

void put_i64(std::ostream& os, std::int64_t v) { put_u64(os, static_cast<std::uint64_t>(v)); }

void put_scalar(std::ostream& os, Scalar v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  os.write(buf, 8);
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put_i64(os, m.rows());
  put_i64(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
}

void put_vector(std::ostream& os, const Vector& v) {
  put_i64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(sizeof(Scalar) * v.size()));
}

std::uint64_t get_u64(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }

Scalar get_scalar(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  Scalar v;
  std::memcpy(&v, buf, 8);
  return v;
}

Matrix get_matrix(std::istream& is) {
  const auto rows = get_i64(is);
  const auto cols = get_i64(is);
  Matrix m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
  return m;
}

Vector get_vector(std::istream& is) {
  const auto n = get_i64(is);
  Vector v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * v.size()));
  return v;
}

void put_gradients(std::ostream& os, const Gradients& g) {
  put_i64(os, static_cast<std::int64_t>(g.weights.size()));
  for (const Matrix& w : g.weights) put_matrix(os, w);
  for (const Vector& b : g.biases) put_vector(os, b);
  put_i64(os, static_cast<std::int64_t>(g.gamma.size()));
  for (const Vector& v : g.gamma) put_vector(os, v);
  for (const Vector& v : g.beta) put_vector(os, v);
}

Gradients get_gradients(std::istream& is) {
  Gradients g;
  const auto layers = get_i64(is);
  for (std::int64_t l = 0; l < layers; ++l) g.weights.push_back(get_matrix(is));
  for (std::int64_t l = 0; l < layers; ++l) g.biases.push_back(get_vector(is));
  const auto bn = get_i64(is);
  for (std::int64_t l = 0; l < bn; ++l) g.gamma.push_back(get_vector(is));
  for (std::int64_t l = 0; l < bn; ++l) g.beta.push_back(get_vector(is));
  return g;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ScoringNet& net, const AdamState& adam) {
  os.write(kMagic, sizeof(kMagic));
  put_i64(os, static_cast<std::int64_t>(net.layer_dims.size()));
  for (int d : net.layer_dims) put_i64(os, d);
  put_i64(os, static_cast<std::int64_t>(net.activation));
  put_i64(os, net.use_batchnorm ? 1 : 0);
  put_i64(os, net.mode == Mode::Train ? 0 : 1);
  put_u64(os, net.rng.state());
  for (const Matrix& w : net.weights) put_matrix(os, w);
  for (const Vector& b : net.biases) put_vector(os, b);
  for (const BatchNormState& bn : net.batchnorm) {
    put_vector(os, bn.gamma);
    put_vector(os, bn.beta);
    put_vector(os, bn.running_mean);
    put_vector(os, bn.running_var);
    put_scalar(os, bn.momentum);
    put_scalar(os, bn.eps);
  }
  put_scalar(os, adam.lr);
  put_scalar(os, adam.beta1);
  put_scalar(os, adam.beta2);
  put_scalar(os, adam.eps);
  put_scalar(os, adam.weight_decay);
  put_i64(os, adam.step);
  put_gradients(os, adam.m);
  put_gradients(os, adam.v);
}

void save_checkpoint(const std::string& path, const ScoringNet& net, const AdamState& adam) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  save_checkpoint(os, net, adam);
}

std::pair<ScoringNet, AdamState> load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint header");

  ScoringNet net;
  const auto ndims = get_i64(is);
  for (std::int64_t i = 0; i < ndims; ++i) net.layer_dims.push_back(static_cast<int>(get_i64(is)));
  net.activation = static_cast<Activation>(get_i64(is));
  net.use_batchnorm = get_i64(is) != 0;
  net.mode = get_i64(is) == 0 ? Mode::Train : Mode::Eval;
  net.rng.set_state(get_u64(is));
  const int layers = static_cast<int>(net.layer_dims.size()) - 1;
  for (int l = 0; l < layers; ++l) net.weights.push_back(get_matrix(is));
  for (int l = 0; l < layers; ++l) net.biases.push_back(get_vector(is));
  if (net.use_batchnorm) {
    for (int l = 0; l < layers - 1; ++l) {
      BatchNormState bn;
      bn.gamma = get_vector(is);
      bn.beta = get_vector(is);
      bn.running_mean = get_vector(is);
      bn.running_var = get_vector(is);
      bn.momentum = get_scalar(is);
      bn.eps = get_scalar(is);
      net.batchnorm.push_back(std::move(bn));
    }
  }
  AdamState adam;
  adam.lr = get_scalar(is);
  adam.beta1 = get_scalar(is);
  adam.beta2 = get_scalar(is);
  adam.eps = get_scalar(is);
  adam.weight_decay = get_scalar(is);
  adam.step = get_i64(is);
  adam.m = get_gradients(is);
  adam.v = get_gradients(is);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return {std::move(net), std::move(adam)};
}

std::pair<ScoringNet, AdamState> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  return load_checkpoint(is);
}

}  // namespace ltr::nn
