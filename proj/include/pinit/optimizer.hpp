#ifndef PINIT_OPTIMIZER_HPP
#define PINIT_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pinit/mask.hpp"
#include "pinit/network.hpp"

namespace pinit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers for every weight and bias.
struct AdamState {
  AdamConfig config;
  std::vector<LayerParams> m;
  std::vector<LayerParams> v;
  std::int64_t t = 0;

  static AdamState for_network(const MlpNetwork& net, AdamConfig config = {}) {
    AdamState s;
    s.config = config;
    s.m = Gradients::zeros_like(net).layers;
    s.v = s.m;
    return s;
  }
};

namespace detail {

inline void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                        const AdamConfig& cfg, double m_corr, double v_corr) {
  require_same_shape("adam_step", param, grad);
  require_same_shape("adam_step", param, m);
  auto p = param.values();
  auto g = grad.values();
  auto mv = m.values();
  auto vv = v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g[i];
    vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = mv[i] / m_corr;
    const double v_hat = vv[i] / v_corr;
    p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace detail

/// One bias-corrected Adam update of every weight and bias.
inline void adam_step(std::vector<LayerParams>& params, const Gradients& grads, AdamState& state) {
  if (params.size() != grads.layers.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  ++state.t;
  const auto t = static_cast<double>(state.t);
  const double m_corr = 1.0 - std::pow(state.config.beta1, t);
  const double v_corr = 1.0 - std::pow(state.config.beta2, t);
  for (std::size_t l = 0; l < params.size(); ++l) {
    detail::adam_update(params[l].weights, grads.layers[l].weights, state.m[l].weights,
                        state.v[l].weights, state.config, m_corr, v_corr);
    detail::adam_update(params[l].bias, grads.layers[l].bias, state.m[l].bias, state.v[l].bias,
                        state.config, m_corr, v_corr);
  }
}

/// Zeroes pruned weights and their moment buffers. Biases are never masked.
inline void project_onto_masks(std::vector<LayerParams>& params, AdamState* state,
                               std::span<const SparseMask> masks) {
  if (masks.empty()) return;
  if (masks.size() != params.size()) throw ShapeError("mask count does not match layer count");
  for (std::size_t l = 0; l < params.size(); ++l) {
    apply_mask(params[l].weights, masks[l]);
    if (state != nullptr) {
      apply_mask(state->m[l].weights, masks[l]);
      apply_mask(state->v[l].weights, masks[l]);
    }
  }
}

/// adam_step followed by W <- W o mask. An empty mask list means no masking.
inline void masked_step(std::vector<LayerParams>& params, const Gradients& grads, AdamState& state,
                        std::span<const SparseMask> masks) {
  if (!masks.empty()) {
    if (masks.size() != params.size()) throw ShapeError("masked_step: mask count mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
      detail::require_same_shape("masked_step", params[l].weights, masks[l].bits());
    }
  }
  adam_step(params, grads, state);
  project_onto_masks(params, &state, masks);
}

}  // namespace pinit

#endif  // PINIT_OPTIMIZER_HPP
