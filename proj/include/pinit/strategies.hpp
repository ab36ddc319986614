#ifndef PINIT_STRATEGIES_HPP
#define PINIT_STRATEGIES_HPP

// Pruning-at-initialisation strategies:
//
//   random dropout   one fixed p-sparse mask per layer, drawn at init
//   kstarts          K candidate p-sparse masks per layer; the fittest
//                    candidate is applied after every update and the least
//                    fit one is dropped every `elimination_interval` steps
//                    until one remains
//   dissipating      weights whose gradient summed over an epoch stays
//                    below epsilon in magnitude are removed, during the
//                    first few epochs only
//   combination      kstarts mask AND dissipation mask
//
// Only weight matrices are pruned. Biases always survive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pinit/mask.hpp"
#include "pinit/network.hpp"
#include "pinit/rng.hpp"

namespace pinit {

/// What the candidate masks are multiplied with before scoring.
enum class FitnessVariant {
  Magnitude,       // current weights
  Gradient,        // gradient of the latest step
  SumOfGradients,  // gradients summed since the previous selection
};

/// How a masked candidate is reduced to a score.
enum class FitnessSum {
  Absolute,  // sum of |entries|
  Signed,    // plain sum of entries
};

inline std::string_view to_string(FitnessVariant v) {
  switch (v) {
    case FitnessVariant::Magnitude: return "magnitude";
    case FitnessVariant::Gradient: return "gradient";
    case FitnessVariant::SumOfGradients: return "sumgrad";
  }
  return "?";
}

inline FitnessVariant parse_fitness_variant(std::string_view s) {
  if (s == "magnitude") return FitnessVariant::Magnitude;
  if (s == "gradient") return FitnessVariant::Gradient;
  if (s == "sumgrad" || s == "sum-of-gradients") return FitnessVariant::SumOfGradients;
  throw std::invalid_argument("unknown fitness variant '" + std::string(s) + "'");
}

/// Score of one population member (a masked matrix).
inline double fitness(const Matrix& member, FitnessSum mode = FitnessSum::Absolute) {
  return mode == FitnessSum::Absolute ? total_abs_sum(member) : total_sum(member);
}

/// fitness(hadamard(source, mask)) without building the product.
inline double masked_fitness(const Matrix& source, const SparseMask& mask,
                             FitnessSum mode = FitnessSum::Absolute) {
  detail::require_same_shape("masked_fitness", source, mask.bits());
  auto s = source.values();
  auto m = mask.bits().values();
  double acc = 0.0;
  if (mode == FitnessSum::Absolute) {
    for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s[i] * m[i]);
  } else {
    for (std::size_t i = 0; i < s.size(); ++i) acc += s[i] * m[i];
  }
  return acc;
}

inline void apply_masks(std::vector<LayerParams>& layers, std::span<const SparseMask> masks) {
  if (masks.size() != layers.size()) throw ShapeError("mask count does not match layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) apply_mask(layers[l].weights, masks[l]);
}

/// Fixed random masks, one per layer, applied once to the weights.
inline std::vector<SparseMask> random_dropout(std::vector<LayerParams>& layers, double p, Rng& rng,
                                              bool exact_count = false) {
  SparseMask::check_p(p);
  std::vector<SparseMask> masks;
  masks.reserve(layers.size());
  for (const auto& layer : layers) {
    const auto r = layer.weights.rows();
    const auto c = layer.weights.cols();
    masks.push_back(exact_count ? generate_mask_exact(r, c, p, rng) : generate_mask(r, c, p, rng));
  }
  apply_masks(layers, masks);
  return masks;
}

// ---------------------------------------------------------------------------
// kstarts

struct KStartsConfig {
  std::size_t k = 10;
  std::int64_t elimination_interval = 5;
  FitnessVariant variant = FitnessVariant::Magnitude;
  FitnessSum sum = FitnessSum::Absolute;
  bool exact_count = false;
};

struct KStartsState {
  KStartsConfig config;
  double p = 0.5;
  std::vector<std::vector<SparseMask>> population;  // [layer][individual]
  std::vector<std::size_t> chosen;                  // index of the applied individual per layer
  std::vector<Matrix> last_gradient;                // Gradient variant
  std::vector<Matrix> grad_accumulator;             // SumOfGradients variant
  std::int64_t eliminations = 0;

  [[nodiscard]] std::size_t population_size(std::size_t layer = 0) const {
    return population.at(layer).size();
  }

  [[nodiscard]] std::vector<SparseMask> chosen_masks() const {
    std::vector<SparseMask> out;
    out.reserve(population.size());
    for (std::size_t l = 0; l < population.size(); ++l) out.push_back(population[l][chosen[l]]);
    return out;
  }
};

/// Draws K masks per layer. Individual i's masks for every layer are drawn
/// before individual i + 1's, so with K = 1 the draw sequence is the same as
/// random_dropout's.
inline KStartsState make_kstarts(const std::vector<LayerParams>& layers, double p,
                                 KStartsConfig config, Rng& rng) {
  SparseMask::check_p(p);
  if (config.k < 1) throw std::invalid_argument("kstarts: k must be at least 1");
  if (config.elimination_interval < 1) {
    throw std::invalid_argument("kstarts: elimination interval must be positive");
  }
  KStartsState state;
  state.config = config;
  state.p = p;
  state.population.resize(layers.size());
  for (std::size_t i = 0; i < config.k; ++i) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto r = layers[l].weights.rows();
      const auto c = layers[l].weights.cols();
      state.population[l].push_back(config.exact_count ? generate_mask_exact(r, c, p, rng)
                                                       : generate_mask(r, c, p, rng));
    }
  }
  state.chosen.assign(layers.size(), 0);
  for (const auto& layer : layers) {
    state.last_gradient.emplace_back(layer.weights.rows(), layer.weights.cols());
    state.grad_accumulator.emplace_back(layer.weights.rows(), layer.weights.cols());
  }
  return state;
}

/// Feeds the gradient of the latest step to the gradient-based fitness sources.
inline void kstarts_observe(KStartsState& state, const Gradients& grads) {
  if (grads.layers.size() != state.population.size()) {
    throw ShapeError("kstarts_observe: layer count mismatch");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    switch (state.config.variant) {
      case FitnessVariant::Magnitude: break;
      case FitnessVariant::Gradient: state.last_gradient[l] = grads.layers[l].weights; break;
      case FitnessVariant::SumOfGradients:
        add_inplace(state.grad_accumulator[l], grads.layers[l].weights);
        break;
    }
  }
}

/// Scores every surviving candidate of every layer against the current
/// fitness source, applies the fittest (W <- W o mask) and, on elimination
/// steps, drops the least fit while more than one candidate remains.
/// Iteration 0 is the selection at initialisation and never eliminates.
inline std::vector<SparseMask> kstarts_select(std::vector<LayerParams>& layers, KStartsState& state,
                                              std::int64_t iteration) {
  if (layers.size() != state.population.size()) {
    throw ShapeError("kstarts_select: layer count mismatch");
  }
  const bool eliminate = iteration > 0 && iteration % state.config.elimination_interval == 0;
  bool eliminated_any = false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& pop = state.population[l];
    if (pop.empty()) throw std::logic_error("kstarts_select: empty population");
    if (pop.size() == 1) {
      state.chosen[l] = 0;
      apply_mask(layers[l].weights, pop[0]);
      continue;
    }
    const Matrix* source = nullptr;
    switch (state.config.variant) {
      case FitnessVariant::Magnitude: source = &layers[l].weights; break;
      case FitnessVariant::Gradient: source = &state.last_gradient[l]; break;
      case FitnessVariant::SumOfGradients: source = &state.grad_accumulator[l]; break;
    }
    std::vector<double> scores(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      scores[i] = masked_fitness(*source, pop[i], state.config.sum);
    }
    // Ties: the fittest is the lowest index, the weakest the highest index.
    std::size_t best = 0;
    std::size_t worst = pop.size() - 1;
    for (std::size_t i = 1; i < pop.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    for (std::size_t i = pop.size() - 1; i-- > 0;) {
      if (scores[i] < scores[worst]) worst = i;
    }
    if (eliminate && worst != best) {
      pop.erase(pop.begin() + static_cast<std::ptrdiff_t>(worst));
      if (worst < best) --best;
      eliminated_any = true;
    }
    state.chosen[l] = best;
    apply_mask(layers[l].weights, pop[best]);
  }
  if (eliminated_any) ++state.eliminations;
  if (state.config.variant == FitnessVariant::SumOfGradients) {
    for (auto& acc : state.grad_accumulator) std::fill(acc.values().begin(), acc.values().end(), 0.0);
  }
  return state.chosen_masks();
}

// ---------------------------------------------------------------------------
// dissipating gradients

struct DissipationConfig {
  double epsilon = 1e-6;
  int active_epochs = 2;
  /// When set, each pruning event also removes the surviving weights with the
  /// smallest accumulated gradient until this fraction of the layer is gone.
  std::optional<double> target_sparsity;
};

struct DissipationState {
  DissipationConfig config;
  std::vector<Matrix> accumulated_dw;
  std::vector<SparseMask> pruned;  // cumulative survivor mask per layer
  int epochs_done = 0;

  [[nodiscard]] bool active() const noexcept { return epochs_done < config.active_epochs; }
};

inline DissipationState make_dissipation(const std::vector<LayerParams>& layers,
                                         DissipationConfig config) {
  if (!(config.epsilon >= 0.0)) throw std::invalid_argument("dissipation: epsilon must be >= 0");
  if (config.active_epochs < 1) throw std::invalid_argument("dissipation: active_epochs must be >= 1");
  if (config.target_sparsity) SparseMask::check_p(*config.target_sparsity);
  DissipationState state;
  state.config = config;
  for (const auto& layer : layers) {
    state.accumulated_dw.emplace_back(layer.weights.rows(), layer.weights.cols());
    state.pruned.push_back(SparseMask::ones(layer.weights.rows(), layer.weights.cols()));
  }
  return state;
}

/// accumulated_dw += dW for every layer.
inline void dissipate_accumulate(DissipationState& state, const Gradients& grads) {
  if (grads.layers.size() != state.accumulated_dw.size()) {
    throw ShapeError("dissipate_accumulate: layer count mismatch");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    add_inplace(state.accumulated_dw[l], grads.layers[l].weights);
  }
}

/// Mask that is 0 wherever |accumulated| < epsilon.
inline SparseMask dissipation_threshold_mask(const Matrix& accumulated, double epsilon) {
  Matrix bits(accumulated.rows(), accumulated.cols());
  auto a = accumulated.values();
  auto b = bits.values();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    b[i] = std::abs(a[i]) < epsilon ? 0.0 : 1.0;
    zeros += b[i] == 0.0;
  }
  const double p = a.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(a.size());
  return SparseMask(std::move(bits), p);
}

/// Epoch-boundary pruning: folds this epoch's threshold mask into the
/// cumulative survivor mask, applies it to the weights and clears the
/// accumulator. Returns the cumulative masks.
inline std::vector<SparseMask> dissipate_prune(std::vector<LayerParams>& layers,
                                               DissipationState& state) {
  if (layers.size() != state.accumulated_dw.size()) {
    throw ShapeError("dissipate_prune: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& acc = state.accumulated_dw[l];
    SparseMask next = intersect(state.pruned[l], dissipation_threshold_mask(acc, state.config.epsilon));
    if (state.config.target_sparsity) {
      const std::size_t n = acc.size();
      const auto wanted = static_cast<std::size_t>(
          std::llround(*state.config.target_sparsity * static_cast<double>(n)));
      const std::size_t have = pruned_count(next);
      if (wanted > have) {
        std::vector<std::size_t> alive;
        alive.reserve(n - have);
        for (std::size_t i = 0; i < n; ++i) {
          if (next.bits().values()[i] != 0.0) alive.push_back(i);
        }
        const std::size_t extra = wanted - have;
        auto key = [&](std::size_t i) { return std::abs(acc.values()[i]); };
        std::nth_element(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(extra),
                         alive.end(), [&](std::size_t a, std::size_t b) {
                           return key(a) < key(b) || (key(a) == key(b) && a < b);
                         });
        Matrix bits = next.bits();
        for (std::size_t j = 0; j < extra; ++j) bits.values()[alive[j]] = 0.0;
        next = SparseMask(std::move(bits), *state.config.target_sparsity);
      }
    }
    state.pruned[l] = std::move(next);
    apply_mask(layers[l].weights, state.pruned[l]);
    std::fill(state.accumulated_dw[l].values().begin(), state.accumulated_dw[l].values().end(), 0.0);
  }
  ++state.epochs_done;
  return state.pruned;
}

// ---------------------------------------------------------------------------
// combination

/// Per-layer AND of the kstarts and dissipation masks.
inline std::vector<SparseMask> combine_masks(std::span<const SparseMask> kstarts,
                                             std::span<const SparseMask> dissipation) {
  if (kstarts.size() != dissipation.size()) throw ShapeError("combine_masks: layer count mismatch");
  std::vector<SparseMask> out;
  out.reserve(kstarts.size());
  for (std::size_t l = 0; l < kstarts.size(); ++l) out.push_back(intersect(kstarts[l], dissipation[l]));
  return out;
}

/// Effective masks for the combination strategy; also applies them to W.
inline std::vector<SparseMask> combination_step(std::vector<LayerParams>& layers,
                                                const KStartsState& kstate,
                                                const DissipationState& dstate) {
  auto masks = combine_masks(kstate.chosen_masks(), dstate.pruned);
  apply_masks(layers, masks);
  return masks;
}

}  // namespace pinit

#endif  // PINIT_STRATEGIES_HPP
