#ifndef PINIT_NETWORK_HPP
#define PINIT_NETWORK_HPP

// Fully connected sigmoid network trained on NMSE with an L1 weight penalty.
//
// Layer l computes out_l = W_l * y_{l-1} + b_l and y_l = sigmoid(out_l), with
// y_0 = X. Inputs are features x samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinit/matrix.hpp"
#include "pinit/rng.hpp"

namespace pinit {

/// Raised when NMSE is requested against targets with zero variance.
class DegenerateTargetError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline double sigmoid(double s) {
  // Clamped so the result stays strictly inside (0, 1) even when exp saturates.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double y;
  if (s >= 0) {
    y = 1.0 / (1.0 + std::exp(-s));
  } else {
    const double e = std::exp(s);
    y = e / (1.0 + e);
  }
  return std::clamp(y, lo, hi);
}

inline double sigmoid_prime(double s) {
  const double y = sigmoid(s);
  return y * (1.0 - y);
}

inline Matrix sigmoid(const Matrix& s) {
  return map(s, [](double x) { return sigmoid(x); });
}

inline Matrix sigmoid_prime(const Matrix& s) {
  return map(s, [](double x) { return sigmoid_prime(x); });
}

struct LayerParams {
  Matrix weights;  // out_dim x in_dim
  Matrix bias;     // out_dim x 1

  [[nodiscard]] std::size_t in_dim() const noexcept { return weights.cols(); }
  [[nodiscard]] std::size_t out_dim() const noexcept { return weights.rows(); }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

enum class InitScheme {
  Glorot,  // uniform in [-r, r], r = sqrt(6 / (fan_in + fan_out))
  Normal,  // N(0, scale^2)
};

struct MlpNetwork {
  std::vector<LayerParams> layers;
  double lambda = 0.0;  // L1 coefficient on weights

  /// Builds a network with layer sizes dims[0] -> dims[1] -> ... ; biases zero.
  static MlpNetwork create(std::span<const std::size_t> dims, Rng& rng,
                           InitScheme scheme = InitScheme::Glorot, double scale = 1.0,
                           double lambda = 0.0) {
    if (dims.size() < 2) throw std::invalid_argument("network needs at least one layer");
    MlpNetwork net;
    net.lambda = lambda;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::size_t fan_in = dims[l];
      const std::size_t fan_out = dims[l + 1];
      if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("layer width must be positive");
      Matrix w(fan_out, fan_in);
      if (scheme == InitScheme::Glorot) {
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-r, r);
        for (double& x : w.values()) x = dist(rng);
      } else {
        std::normal_distribution<double> dist(0.0, scale);
        for (double& x : w.values()) x = dist(rng);
      }
      net.layers.push_back({std::move(w), Matrix(fan_out, 1)});
    }
    return net;
  }

  [[nodiscard]] std::size_t depth() const noexcept { return layers.size(); }
  [[nodiscard]] std::size_t input_dim() const { return layers.front().in_dim(); }
  [[nodiscard]] std::size_t output_dim() const { return layers.back().out_dim(); }

  /// Throws if consecutive layer shapes do not chain.
  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.bias.rows() != layer.weights.rows() || layer.bias.cols() != 1) {
        throw ShapeError("layer " + std::to_string(l) + ": bias " + layer.bias.shape_string() +
                         " does not match weights " + layer.weights.shape_string());
      }
      if (l > 0 && layer.in_dim() != layers[l - 1].out_dim()) {
        throw ShapeError("layer " + std::to_string(l) + ": input width " +
                         std::to_string(layer.in_dim()) + " does not chain with previous output " +
                         std::to_string(layers[l - 1].out_dim()));
      }
    }
  }

  friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;
};

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre_activations;  // out_l
  std::vector<Matrix> activations;      // y_l, last one is the prediction

  [[nodiscard]] const Matrix& output() const { return activations.back(); }
};

/// Per-layer derivatives, shaped like the network's parameters.
struct Gradients {
  std::vector<LayerParams> layers;

  static Gradients zeros_like(const MlpNetwork& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
      g.layers.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                          Matrix(layer.bias.rows(), 1)});
    }
    return g;
  }
};

inline ForwardTrace forward(const MlpNetwork& net, const Matrix& x) {
  ForwardTrace trace;
  trace.input = x;
  trace.pre_activations.reserve(net.depth());
  trace.activations.reserve(net.depth());
  const Matrix* prev = &trace.input;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.in_dim() != prev->rows()) {
      throw ShapeError("forward: layer " + std::to_string(l) + " expects " +
                       std::to_string(layer.in_dim()) + " inputs, got " + prev->shape_string());
    }
    trace.pre_activations.push_back(add_bias(matmul(layer.weights, *prev), layer.bias));
    trace.activations.push_back(sigmoid(trace.pre_activations.back()));
    prev = &trace.activations.back();
  }
  return trace;
}

/// Prediction only; skips keeping the intermediate matrices.
inline Matrix predict(const MlpNetwork& net, const Matrix& x) {
  Matrix y = x;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.in_dim() != y.rows()) {
      throw ShapeError("predict: layer " + std::to_string(l) + " expects " +
                       std::to_string(layer.in_dim()) + " inputs, got " + y.shape_string());
    }
    y = sigmoid(add_bias(matmul(layer.weights, y), layer.bias));
  }
  return y;
}

namespace detail {

struct TargetStats {
  double count;
  double variance;  // unbiased, over all elements
};

inline TargetStats target_stats(const Matrix& y_t) {
  const double n = static_cast<double>(y_t.size());
  if (y_t.size() < 2) throw DegenerateTargetError("nmse: need at least two target elements");
  const double mu = total_sum(y_t) / n;
  double ss = 0.0;
  for (double v : y_t.values()) ss += (v - mu) * (v - mu);
  const double var = ss / (n - 1.0);
  if (!(var > 0.0)) throw DegenerateTargetError("nmse: targets are constant (zero variance)");
  return {n, var};
}

}  // namespace detail

/// Mean squared error over all elements divided by the unbiased variance of y_t.
inline double nmse(const Matrix& y_p, const Matrix& y_t) {
  detail::require_same_shape("nmse", y_p, y_t);
  const auto stats = detail::target_stats(y_t);
  double se = 0.0;
  auto p = y_p.values();
  auto t = y_t.values();
  for (std::size_t i = 0; i < p.size(); ++i) se += (p[i] - t[i]) * (p[i] - t[i]);
  return (se / stats.count) / stats.variance;
}

/// lambda * sum |W| over every weight matrix; biases are not penalised.
inline double l1_penalty(const MlpNetwork& net) {
  if (net.lambda == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& layer : net.layers) acc += total_abs_sum(layer.weights);
  return net.lambda * acc;
}

inline double total_loss(const MlpNetwork& net, const Matrix& x, const Matrix& y_t) {
  return nmse(predict(net, x), y_t) + l1_penalty(net);
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

/// Backpropagates nmse(y_p, y_t) + l1_penalty(net) through a trace of `net`.
inline Gradients backward(const MlpNetwork& net, const ForwardTrace& trace, const Matrix& y_t) {
  const Matrix& y_p = trace.output();
  detail::require_same_shape("backward", y_p, y_t);
  if (trace.activations.size() != net.depth()) {
    throw ShapeError("backward: trace depth does not match network");
  }
  const auto stats = detail::target_stats(y_t);
  const double coeff = 2.0 / (stats.count * stats.variance);

  // delta_L = dNMSE/dy_p o sigma'(out_L), where sigma'(out) = y (1 - y).
  Matrix delta(y_p.rows(), y_p.cols());
  {
    auto d = delta.values();
    auto p = y_p.values();
    auto t = y_t.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = coeff * (p[i] - t[i]) * p[i] * (1.0 - p[i]);
  }

  Gradients grads;
  grads.layers.resize(net.depth());
  for (std::size_t l = net.depth(); l-- > 0;) {
    const Matrix& below = l == 0 ? trace.input : trace.activations[l - 1];
    auto& g = grads.layers[l];
    g.weights = matmul_transpose_b(delta, below);
    if (net.lambda != 0.0) {
      auto gw = g.weights.values();
      auto w = net.layers[l].weights.values();
      for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += net.lambda * sign(w[i]);
    }
    g.bias = row_sums(delta);
    if (l > 0) {
      Matrix next = matmul_transpose_a(net.layers[l].weights, delta);
      auto n = next.values();
      auto y = below.values();
      for (std::size_t i = 0; i < n.size(); ++i) n[i] *= y[i] * (1.0 - y[i]);
      delta = std::move(next);
    }
  }
  return grads;
}

/// Argmax per column; ties resolve to the lowest row index.
inline std::vector<std::size_t> argmax_columns(const Matrix& scores) {
  std::vector<std::size_t> best(scores.cols(), 0);
  for (std::size_t j = 0; j < scores.cols(); ++j) {
    double top = scores(0, j);
    for (std::size_t i = 1; i < scores.rows(); ++i) {
      if (scores(i, j) > top) {
        top = scores(i, j);
        best[j] = i;
      }
    }
  }
  return best;
}

/// Class index of a sample.
using Label = std::uint8_t;

/// Fraction of columns whose argmax equals the label.
inline double accuracy(const Matrix& y_p, std::span<const Label> labels) {
  if (labels.size() != y_p.cols()) {
    throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(y_p.cols()) + " samples");
  }
  if (labels.empty()) return 0.0;
  const auto pred = argmax_columns(y_p);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto label = static_cast<std::size_t>(labels[j]);
    if (label >= y_p.rows()) {
      throw std::out_of_range("accuracy: label " + std::to_string(label) + " out of range");
    }
    if (pred[j] == label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace pinit

#endif  // PINIT_NETWORK_HPP
