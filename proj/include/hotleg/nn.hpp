#pragma once

// Dense feedforward primitives: layers, Glorot-uniform init, exact
// backpropagation through ReLU chains, inverted dropout, and Adam with
// coupled L2 regularization. All math in 64-bit.

#include "hotleg/common.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace hotleg::nn {

enum class Activation { relu, linear };

/// Glorot-uniform weights: entries in [-sqrt(6/(in+out)), +sqrt(6/(in+out))].
inline Mat xavier_init(int in_dim, int out_dim, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) {
    throw std::invalid_argument("xavier_init: dimensions must be >= 1");
  }
  const double bound = std::sqrt(6.0 / (in_dim + out_dim));
  Rng rng(seed);
  Mat w(in_dim, out_dim);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = rng.uniform(-bound, bound);
  }
  return w;
}

struct DenseLayer {
  Mat w;  // in_dim x out_dim
  Vec b;  // out_dim
  Activation act = Activation::linear;

  int in_dim() const { return static_cast<int>(w.rows()); }
  int out_dim() const { return static_cast<int>(w.cols()); }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  std::vector<int> layer_sizes() const {
    std::vector<int> sizes{in_dim()};
    for (const auto& l : layers) sizes.push_back(l.out_dim());
    return sizes;
  }
};

/// ReLU on hidden layers, linear output layer, Xavier weights, zero biases.
inline Mlp make_mlp(const std::vector<int>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) {
    throw std::invalid_argument("make_mlp: need at least input and output dims");
  }
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer layer;
    layer.w = xavier_init(sizes[i], sizes[i + 1], derive_seed(seed, i));
    layer.b = Vec::Zero(sizes[i + 1]);
    layer.act = (i + 2 < sizes.size()) ? Activation::relu : Activation::linear;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

inline long param_count(const std::vector<int>& sizes) {
  long total = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    total += static_cast<long>(sizes[i]) * sizes[i + 1] + sizes[i + 1];
  }
  return total;
}

inline long param_count(const Mlp& mlp) { return param_count(mlp.layer_sizes()); }

// ---------------------------------------------------------------------------
// Dropout

struct DropoutSpec {
  double rate = 0.0;
  enum class Mode { train, inference } mode = Mode::inference;
  std::uint64_t seed = 0;

  bool active() const { return mode == Mode::train && rate > 0.0; }
};

inline DropoutSpec no_dropout() { return {}; }

// ---------------------------------------------------------------------------
// Forward / backward

struct MlpCache {
  Mat input;
  std::vector<Mat> pre;    // pre-activation per layer
  std::vector<Mat> post;   // post-activation (after dropout) per layer
  std::vector<Mat> mask;   // dropout mask per hidden layer (empty if inactive)
  bool valid = false;
};

/// Forward pass; dropout (inverted, scale 1/(1-rate)) applies to hidden-layer
/// outputs only. Pass a cache to enable a matching backward call.
inline Mat mlp_forward(const Mlp& mlp, const Mat& batch, const DropoutSpec& dropout,
                       MlpCache* cache = nullptr) {
  if (batch.cols() != mlp.in_dim()) {
    throw shape_error("mlp_forward: batch width " + std::to_string(batch.cols()) +
                      " != input dim " + std::to_string(mlp.in_dim()));
  }
  if (!batch.allFinite()) {
    throw numeric_error("mlp_forward: non-finite input");
  }
  if (dropout.rate < 0.0 || dropout.rate >= 1.0) {
    throw std::invalid_argument("mlp_forward: dropout rate must be in [0,1)");
  }
  Rng drop_rng(dropout.seed);
  const double keep_scale = 1.0 / (1.0 - dropout.rate);
  if (cache) {
    cache->input = batch;
    cache->pre.assign(mlp.layers.size(), Mat());
    cache->post.assign(mlp.layers.size(), Mat());
    cache->mask.assign(mlp.layers.size(), Mat());
    cache->valid = true;
  }
  Mat a = batch;
  Mat z;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const DenseLayer& layer = mlp.layers[l];
    matmul(a, layer.w, z);
    z.rowwise() += layer.b.transpose();
    if (cache) cache->pre[l] = z;
    if (layer.act == Activation::relu) {
      a = z.cwiseMax(0.0);
    } else {
      a = std::move(z);
    }
    const bool hidden = l + 1 < mlp.layers.size();
    if (hidden && dropout.active()) {
      Mat mask(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = drop_rng.uniform() < dropout.rate ? 0.0 : keep_scale;
      }
      a.array() *= mask.array();
      if (cache) cache->mask[l] = std::move(mask);
    }
    if (cache) cache->post[l] = a;
  }
  return a;
}

struct MlpGrads {
  std::vector<Mat> dw;
  std::vector<Vec> db;
  Mat dinput;
};

/// Exact chain rule; ReLU subgradient at 0 is 0.
inline MlpGrads mlp_backward(const Mlp& mlp, const MlpCache& cache,
                             const Mat& upstream) {
  if (!cache.valid || cache.pre.size() != mlp.layers.size()) {
    throw std::runtime_error("mlp_backward: cache does not match this network");
  }
  if (upstream.rows() != cache.input.rows() ||
      upstream.cols() != mlp.out_dim()) {
    throw shape_error("mlp_backward: upstream gradient shape mismatch");
  }
  const auto n_layers = mlp.layers.size();
  MlpGrads grads;
  grads.dw.resize(n_layers);
  grads.db.resize(n_layers);
  Mat delta = upstream;
  Mat tmp;
  for (std::size_t li = n_layers; li-- > 0;) {
    const DenseLayer& layer = mlp.layers[li];
    const bool hidden = li + 1 < n_layers;
    if (hidden && cache.mask[li].size() > 0) {
      delta.array() *= cache.mask[li].array();
    }
    if (layer.act == Activation::relu) {
      delta.array() *= (cache.pre[li].array() > 0.0).cast<double>();
    }
    const Mat& layer_input = (li == 0) ? cache.input : cache.post[li - 1];
    matmul_at_b(layer_input, delta, grads.dw[li]);
    grads.db[li] = delta.colwise().sum();
    if (li > 0) {
      matmul_a_bt(delta, layer.w, tmp);
      delta = std::move(tmp);
    } else {
      matmul_a_bt(delta, layer.w, grads.dinput);
    }
  }
  return grads;
}

// Dropout masks stored in the cache are consumed by the backward pass; the
// mask multiplication above must come before the ReLU derivative only when
// dropout follows activation, which is the order used in mlp_forward.

// ---------------------------------------------------------------------------
// Parameter references (flat, documented order: per layer weights then bias)

struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index size = 0;
};

inline void collect_refs(Mlp& mlp, const std::string& prefix,
                         std::vector<TensorRef>& out) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight",
                   layer.w.data(), layer.w.size()});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias",
                   layer.b.data(), layer.b.size()});
  }
}

inline void collect_refs(MlpGrads& grads, const std::string& prefix,
                         std::vector<TensorRef>& out) {
  for (std::size_t l = 0; l < grads.dw.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight",
                   grads.dw[l].data(), grads.dw[l].size()});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias",
                   grads.db[l].data(), grads.db[l].size()});
  }
}

// ---------------------------------------------------------------------------
// Adam with coupled L2 (weight decay added to the gradient before moments)

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig cfg;
  long step_count = 0;
  std::vector<Eigen::ArrayXd> first_moment;
  std::vector<Eigen::ArrayXd> second_moment;

  static AdamState init(const AdamConfig& cfg, const std::vector<TensorRef>& params) {
    AdamState s;
    s.cfg = cfg;
    for (const auto& p : params) {
      s.first_moment.push_back(Eigen::ArrayXd::Zero(p.size));
      s.second_moment.push_back(Eigen::ArrayXd::Zero(p.size));
    }
    return s;
  }
};

inline void adam_step(AdamState& state, const std::vector<TensorRef>& params,
                      const std::vector<TensorRef>& grads) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw shape_error("adam_step: parameter/gradient/moment block counts disagree");
  }
  state.step_count += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size) {
      throw shape_error("adam_step: shape mismatch in block " + params[i].name);
    }
    Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
    if (!g.isFinite().all()) {
      throw numeric_error("adam_step: non-finite gradient in block " + grads[i].name);
    }
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (state.cfg.weight_decay != 0.0) {
      const Eigen::ArrayXd eff = g + state.cfg.weight_decay * p;
      m = b1 * m + (1.0 - b1) * eff;
      v = b2 * v + (1.0 - b2) * eff.square();
    } else {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.square();
    }
    p -= state.cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + state.cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct FdReport {
  bool pass = false;
  double worst_rel_error = 0.0;
  std::string worst_param;
};

/// Central differences over every parameter scalar. `loss` evaluates the
/// objective at the current parameters; `analytic` must be the gradient at
/// the unperturbed point, aligned with `params`.
inline FdReport finite_diff_check(const std::vector<TensorRef>& params,
                                  const std::function<double()>& loss,
                                  const std::vector<TensorRef>& analytic,
                                  double tolerance, double step = 1e-5) {
  if (tolerance <= 0.0) {
    throw std::invalid_argument("finite_diff_check: tolerance must be > 0");
  }
  FdReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size; ++j) {
      double& x = params[i].data[j];
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[i].data[j];
      const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      const double rel = std::abs(numeric - exact) / denom;
      if (rel > report.worst_rel_error) {
        report.worst_rel_error = rel;
        report.worst_param = params[i].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  report.pass = report.worst_rel_error < tolerance;
  return report;
}

/// Convenience overload for a bare MLP under a caller-supplied loss on the
/// network output. The loss functor must also provide the output gradient.
struct OutputLoss {
  std::function<double(const Mat&)> value;
  std::function<Mat(const Mat&)> grad;
};

inline FdReport finite_diff_check(Mlp& mlp, const Mat& input,
                                  const OutputLoss& loss, double tolerance) {
  if (tolerance <= 0.0) {
    throw std::invalid_argument("finite_diff_check: tolerance must be > 0");
  }
  if (param_count(mlp) > 10000) {
    throw std::invalid_argument("finite_diff_check: network too large (>1e4 params)");
  }
  MlpCache cache;
  const Mat out = mlp_forward(mlp, input, no_dropout(), &cache);
  MlpGrads grads = mlp_backward(mlp, cache, loss.grad(out));
  std::vector<TensorRef> params, analytic;
  collect_refs(mlp, "mlp", params);
  collect_refs(grads, "mlp", analytic);
  auto eval = [&]() { return loss.value(mlp_forward(mlp, input, no_dropout())); };
  return finite_diff_check(params, eval, analytic, tolerance);
}

}  // namespace hotleg::nn
