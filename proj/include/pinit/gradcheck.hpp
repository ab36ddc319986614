#ifndef PINIT_GRADCHECK_HPP
#define PINIT_GRADCHECK_HPP

// Central finite-difference check of backward() against the scalar loss
// nmse + l1_penalty. Only forward evaluations are used on the numeric side.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "pinit/network.hpp"
#include "pinit/rng.hpp"

namespace pinit {

struct GradCheckReport {
  std::size_t coordinates = 0;
  std::size_t within_tolerance = 0;
  double max_relative_error = 0.0;

  [[nodiscard]] double pass_fraction() const {
    return coordinates == 0 ? 1.0 : static_cast<double>(within_tolerance) / coordinates;
  }

  void merge(const GradCheckReport& other) {
    coordinates += other.coordinates;
    within_tolerance += other.within_tolerance;
    max_relative_error = std::max(max_relative_error, other.max_relative_error);
  }
};

struct GradCheckOptions {
  double step = 1e-5;
  double relative_tolerance = 1e-4;
  /// Denominator floor so that coordinates whose true gradient is ~0 are
  /// compared absolutely.
  double magnitude_floor = 1e-8;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

inline GradCheckReport check_gradients(const MlpNetwork& net, const Matrix& x, const Matrix& y_t,
                                       const GradCheckOptions& opt = {}) {
  const auto grads = backward(net, forward(net, x), y_t);
  MlpNetwork probe = net;
  GradCheckReport report;
  auto visit = [&](Matrix& param, const Matrix& analytic) {
    auto values = param.values();
    auto a = analytic.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + opt.step;
      const double up = total_loss(probe, x, y_t);
      values[i] = saved - opt.step;
      const double down = total_loss(probe, x, y_t);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double err = relative_error(a[i], numeric, opt.magnitude_floor);
      ++report.coordinates;
      if (err <= opt.relative_tolerance) ++report.within_tolerance;
      report.max_relative_error = std::max(report.max_relative_error, err);
    }
  };
  for (std::size_t l = 0; l < probe.depth(); ++l) {
    visit(probe.layers[l].weights, grads.layers[l].weights);
    visit(probe.layers[l].bias, grads.layers[l].bias);
  }
  return report;
}

/// Random network whose weights satisfy min_abs <= |w| <= max_abs, so that
/// a finite-difference step never crosses the L1 kink at zero.
inline MlpNetwork random_bounded_network(std::span<const std::size_t> dims, Rng& rng,
                                         double lambda, double min_abs = 0.1,
                                         double max_abs = 1.0) {
  MlpNetwork net = MlpNetwork::create(dims, rng, InitScheme::Glorot, 1.0, lambda);
  std::uniform_real_distribution<double> mag(min_abs, max_abs);
  std::bernoulli_distribution negative(0.5);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  for (auto& layer : net.layers) {
    for (double& w : layer.weights.values()) w = negative(rng) ? -mag(rng) : mag(rng);
    for (double& b : layer.bias.values()) b = bias(rng);
  }
  return net;
}

struct GradCheckSuiteOptions {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  std::size_t max_width = 12;
  std::size_t batch = 5;
  double lambda = 1e-3;
  GradCheckOptions check;
};

/// Three-layer sigmoid networks with random widths in [2, max_width],
/// random inputs in [0, 1) and random targets in [0, 1).
inline GradCheckReport run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
  GradCheckReport total;
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    Rng rng = make_rng(opt.base_seed + s);
    std::uniform_int_distribution<std::size_t> width(2, opt.max_width);
    const std::vector<std::size_t> dims{width(rng), width(rng), width(rng), width(rng)};
    const MlpNetwork net = random_bounded_network(dims, rng, opt.lambda);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix x(dims.front(), opt.batch);
    Matrix y(dims.back(), opt.batch);
    for (double& v : x.values()) v = unit(rng);
    for (double& v : y.values()) v = unit(rng);
    total.merge(check_gradients(net, x, y, opt.check));
  }
  return total;
}

}  // namespace pinit

#endif  // PINIT_GRADCHECK_HPP
