#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "pinit/network.hpp"
#include "pinit/optimizer.hpp"

using pinit::Matrix;
using pinit::MlpNetwork;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, pinit::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

/// Weights with lo <= |w| <= hi and random signs.
MlpNetwork bounded_net(const std::vector<std::size_t>& dims, pinit::Rng& rng, double lambda) {
  MlpNetwork net = MlpNetwork::create(dims, rng);
  net.lambda = lambda;
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution neg(0.5);
  for (auto& layer : net.layers) {
    for (double& w : layer.weights.values()) w = neg(rng) ? -mag(rng) : mag(rng);
    for (double& b : layer.bias.values()) b = mag(rng) - 0.5;
  }
  return net;
}

// Plain forward pass + loss used by the finite-difference oracle; it does
// not touch backward().
double oracle_loss(const MlpNetwork& net, const Matrix& x, const Matrix& y) {
  Matrix a = x;
  for (const auto& layer : net.layers) {
    Matrix out(layer.weights.rows(), a.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) {
        double s = layer.bias(i, 0);
        for (std::size_t k = 0; k < a.rows(); ++k) s += layer.weights(i, k) * a(k, j);
        out(i, j) = 1.0 / (1.0 + std::exp(-s));
      }
    a = out;
  }
  const double n = static_cast<double>(y.size());
  double mu = 0;
  for (double v : y.values()) mu += v;
  mu /= n;
  double var = 0, se = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    var += (y.values()[i] - mu) * (y.values()[i] - mu);
    se += (a.values()[i] - y.values()[i]) * (a.values()[i] - y.values()[i]);
  }
  double l1 = 0;
  for (const auto& layer : net.layers)
    for (double w : layer.weights.values()) l1 += std::abs(w);
  return (se / n) / (var / (n - 1)) + net.lambda * l1;
}

struct FdStats {
  std::size_t total = 0;
  std::size_t ok = 0;
  double worst = 0;
};

FdStats finite_difference_check(const MlpNetwork& net, const Matrix& x, const Matrix& y) {
  const auto grads = pinit::backward(net, pinit::forward(net, x), y);
  MlpNetwork probe = net;
  const double h = 1e-5;
  FdStats st;
  auto visit = [&](Matrix& p, const Matrix& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double up = oracle_loss(probe, x, y);
      p.values()[i] = keep - h;
      const double dn = oracle_loss(probe, x, y);
      p.values()[i] = keep;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = g.values()[i];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      ++st.total;
      st.ok += rel <= 1e-4;
      st.worst = std::max(st.worst, rel);
    }
  };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    visit(probe.layers[l].weights, grads.layers[l].weights);
    visit(probe.layers[l].bias, grads.layers[l].bias);
  }
  return st;
}

}  // namespace

TEST(Sigmoid, KnownValues) {
  EXPECT_DOUBLE_EQ(pinit::sigmoid(0.0), 0.5);
  // 1 / (1 + e^-2)
  EXPECT_NEAR(pinit::sigmoid(2.0), 0.8807970779778823, 1e-15);
  auto rng = pinit::make_rng(1);
  std::uniform_real_distribution<double> d(-30, 30);
  for (int i = 0; i < 1000; ++i) {
    const double s = d(rng);
    EXPECT_NEAR(pinit::sigmoid(s) + pinit::sigmoid(-s), 1.0, 1e-15);
  }
}

TEST(Sigmoid, DerivativeValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(pinit::sigmoid_prime(0.0), 0.25);
  auto rng = pinit::make_rng(2);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const double s = d(rng);
    EXPECT_NEAR(pinit::sigmoid_prime(s), pinit::sigmoid_prime(-s), 1e-15);
    const double h = 1e-5;
    const double fd = (pinit::sigmoid(s + h) - pinit::sigmoid(s - h)) / (2 * h);
    EXPECT_NEAR(pinit::sigmoid_prime(s), fd, 1e-8);
  }
}

TEST(Sigmoid, StaysInsideOpenIntervalForAllFiniteInputs) {
  auto rng = pinit::make_rng(3);
  std::uniform_real_distribution<double> d(-800, 800);
  std::vector<double> inputs{0.0, 1e-300, -1e-300, 40.0, -40.0, 745.0, -745.0, 1e308, -1e308,
                             std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  for (int i = 0; i < 1000; ++i) inputs.push_back(d(rng));
  for (double s : inputs) {
    const double y = pinit::sigmoid(s);
    const double dy = pinit::sigmoid_prime(s);
    EXPECT_GT(y, 0.0) << s;
    EXPECT_LT(y, 1.0) << s;
    EXPECT_GT(dy, 0.0) << s;
    EXPECT_LE(dy, 0.25) << s;
  }
}

TEST(Forward, ZeroNetworkOutputsOneHalf) {
  MlpNetwork net;
  net.layers.push_back({Matrix(3, 4), Matrix(3, 1)});
  const auto trace = pinit::forward(net, Matrix::ones(4, 5));
  for (double v : trace.output().values()) EXPECT_EQ(v, 0.5);
}

TEST(Forward, ScalarNetwork) {
  MlpNetwork net;
  net.layers.push_back({Matrix{{1}}, Matrix{{0}}});
  const auto trace = pinit::forward(net, Matrix{{2}});
  EXPECT_NEAR(trace.output()(0, 0), 0.8807970779778823, 1e-15);
}

TEST(Forward, TraceIsConsistentOnRandomFourLayerNets) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rng = pinit::make_rng(seed);
    const std::vector<std::size_t> dims{6, 5, 4, 3, 2};
    const MlpNetwork net = MlpNetwork::create(dims, rng);
    const Matrix x = random_matrix(6, 7, rng);
    const auto trace = pinit::forward(net, x);
    ASSERT_EQ(trace.activations.size(), 4u);
    for (std::size_t l = 0; l < 4; ++l) {
      EXPECT_EQ(trace.activations[l], pinit::sigmoid(trace.pre_activations[l]));
      for (double v : trace.activations[l].values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
    EXPECT_EQ(pinit::predict(net, x), trace.output());
  }
}

TEST(Forward, DimensionMismatchNamesLayer) {
  MlpNetwork net;
  net.layers.push_back({Matrix(3, 4), Matrix(3, 1)});
  net.layers.push_back({Matrix(2, 5), Matrix(2, 1)});
  try {
    (void)pinit::forward(net, Matrix(4, 1));
    FAIL();
  } catch (const pinit::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(net.validate(), pinit::ShapeError);
}

TEST(Nmse, PerfectPredictionIsZero) {
  const Matrix y{{0.1, 0.7}, {0.3, 0.2}};
  EXPECT_EQ(pinit::nmse(y, y), 0.0);
}

TEST(Nmse, PredictingTheMeanGivesNMinusOneOverN) {
  const Matrix y{{1, 5, 2, 8, 4}};
  const double mu = 4.0;
  EXPECT_NEAR(pinit::nmse(Matrix(1, 5, mu), y), 4.0 / 5.0, 1e-15);
}

TEST(Nmse, HandComputedExample) {
  // numerator mean(1, 4, 9) = 14/3, unbiased variance of (2, 4, 6) = 4
  EXPECT_NEAR(pinit::nmse(Matrix{{1, 2, 3}}, Matrix{{2, 4, 6}}), 7.0 / 6.0, 1e-15);
}

TEST(Nmse, DegenerateTargetsRejected) {
  EXPECT_THROW((void)pinit::nmse(Matrix{{1, 2}}, Matrix{{3, 3}}), pinit::DegenerateTargetError);
  EXPECT_THROW((void)pinit::nmse(Matrix{{1}}, Matrix{{3}}), pinit::DegenerateTargetError);
  EXPECT_THROW((void)pinit::nmse(Matrix{{1, 2}}, Matrix{{1}, {2}}), pinit::ShapeError);
}

TEST(Nmse, NonNegativeAndZeroOnlyOnExactMatch) {
  auto rng = pinit::make_rng(4);
  for (int i = 0; i < 200; ++i) {
    const Matrix t = random_matrix(3, 4, rng);
    Matrix p = t;
    EXPECT_EQ(pinit::nmse(p, t), 0.0);
    p.values()[static_cast<std::size_t>(i % 12)] += 1e-9;
    EXPECT_GT(pinit::nmse(p, t), 0.0);
    EXPECT_GE(pinit::nmse(random_matrix(3, 4, rng), t), 0.0);
  }
}

TEST(L1Penalty, Values) {
  MlpNetwork net;
  net.layers.push_back({Matrix{{-1, 2}, {-3, 4}}, Matrix{{100}, {-100}}});
  net.lambda = 0.0;
  EXPECT_EQ(pinit::l1_penalty(net), 0.0);
  net.lambda = 1.0;
  EXPECT_DOUBLE_EQ(pinit::l1_penalty(net), 10.0);  // biases excluded
  for (double& w : net.layers[0].weights.values()) w = -w;
  EXPECT_DOUBLE_EQ(pinit::l1_penalty(net), 10.0);
}

TEST(Backward, PerfectFitWithoutPenaltyHasZeroGradient) {
  auto rng = pinit::make_rng(5);
  const std::vector<std::size_t> dims{4, 3, 2};
  const MlpNetwork net = MlpNetwork::create(dims, rng);
  const Matrix x = random_matrix(4, 6, rng);
  const auto trace = pinit::forward(net, x);
  const auto grads = pinit::backward(net, trace, trace.output());
  for (const auto& g : grads.layers) {
    for (double v : g.weights.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.bias.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, MatchesFiniteDifferencesOnRandomThreeLayerNets) {
  for (double lambda : {0.0, 1e-3}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto rng = pinit::make_rng(100 + seed);
      std::uniform_int_distribution<std::size_t> w(2, 8);
      const std::vector<std::size_t> dims{w(rng), w(rng), w(rng), w(rng)};
      const MlpNetwork net = bounded_net(dims, rng, lambda);
      const Matrix x = random_matrix(dims.front(), 4, rng);
      const Matrix y = random_matrix(dims.back(), 4, rng);
      const auto st = finite_difference_check(net, x, y);
      EXPECT_GE(static_cast<double>(st.ok), 0.99 * static_cast<double>(st.total))
          << "seed " << seed << " lambda " << lambda;
      EXPECT_LT(st.worst, 1e-3) << "seed " << seed << " lambda " << lambda;
    }
  }
}

TEST(Backward, ScalarNetworkMatchesHandExpansion) {
  // One weight w, one bias c, two samples x = (x1, x2), targets (t1, t2).
  // L = ((y1 - t1)^2 + (y2 - t2)^2) / 2 / var + lambda |w|,  var = (t1 - t2)^2 / 2
  // dL/dw = sum_i (y_i - t_i) y_i (1 - y_i) x_i / var + lambda sign(w)
  // dL/dc = sum_i (y_i - t_i) y_i (1 - y_i) / var
  const double w = -0.7, c = 0.3, x1 = 0.5, x2 = 2.0, t1 = 0.2, t2 = 0.9, lambda = 0.01;
  MlpNetwork net;
  net.lambda = lambda;
  net.layers.push_back({Matrix{{w}}, Matrix{{c}}});
  const Matrix x{{x1, x2}};
  const Matrix t{{t1, t2}};
  const auto g = pinit::backward(net, pinit::forward(net, x), t);

  const double y1 = 1 / (1 + std::exp(-(w * x1 + c)));
  const double y2 = 1 / (1 + std::exp(-(w * x2 + c)));
  const double var = (t1 - t2) * (t1 - t2) / 2;
  const double e1 = (y1 - t1) * y1 * (1 - y1) / var;
  const double e2 = (y2 - t2) * y2 * (1 - y2) / var;
  EXPECT_NEAR(g.layers[0].weights(0, 0), e1 * x1 + e2 * x2 - lambda, 1e-14);
  EXPECT_NEAR(g.layers[0].bias(0, 0), e1 + e2, 1e-14);
}

TEST(Backward, DuplicatedBatchScalesByVarianceCorrection) {
  // Doubling the batch keeps the mean squared error, but the unbiased target
  // variance changes from S/(n-1) to 2S/(2n-1); gradients therefore scale by
  // (2n-1) / (2(n-1)).
  auto rng = pinit::make_rng(6);
  const std::vector<std::size_t> dims{5, 4, 3};
  const MlpNetwork net = MlpNetwork::create(dims, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const Matrix y = random_matrix(3, 4, rng);
  Matrix x2(5, 8), y2(3, 8);
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t i = 0; i < 5; ++i) x2(i, j) = x(i, j % 4);
    for (std::size_t i = 0; i < 3; ++i) y2(i, j) = y(i, j % 4);
  }
  const double n = 12.0;
  const double factor = (2 * n - 1) / (2 * (n - 1));
  const auto g1 = pinit::backward(net, pinit::forward(net, x), y);
  const auto g2 = pinit::backward(net, pinit::forward(net, x2), y2);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < g1.layers[l].weights.size(); ++i) {
      EXPECT_NEAR(g2.layers[l].weights.values()[i], factor * g1.layers[l].weights.values()[i], 1e-12);
    }
    for (std::size_t i = 0; i < g1.layers[l].bias.size(); ++i) {
      EXPECT_NEAR(g2.layers[l].bias.values()[i], factor * g1.layers[l].bias.values()[i], 1e-12);
    }
  }
}

TEST(Backward, LossDecreasesUnderSmallStepAdam) {
  auto rng = pinit::make_rng(7);
  const std::vector<std::size_t> dims{3, 6, 2};
  MlpNetwork net = MlpNetwork::create(dims, rng);
  net.lambda = 1e-4;
  const Matrix x = random_matrix(3, 16, rng);
  Matrix y(2, 16);
  for (std::size_t j = 0; j < 16; ++j) {
    y(0, j) = 0.2 + 0.6 * x(0, j);
    y(1, j) = 0.8 - 0.5 * x(1, j) * x(2, j);
  }
  auto adam = pinit::AdamState::for_network(net, {.lr = 1e-3});
  double prev = pinit::total_loss(net, x, y);
  int increases = 0;
  for (int it = 0; it < 50; ++it) {
    const auto g = pinit::backward(net, pinit::forward(net, x), y);
    pinit::adam_step(net.layers, g, adam);
    const double now = pinit::total_loss(net, x, y);
    increases += now > prev;
    prev = now;
  }
  EXPECT_LE(increases, 5);
}

TEST(Accuracy, OneHotPredictionsAreFullyCorrect) {
  const std::vector<pinit::Label> labels{0, 2, 1, 2};
  Matrix y(3, 4);
  for (std::size_t j = 0; j < 4; ++j) y(labels[j], j) = 1.0;
  EXPECT_EQ(pinit::accuracy(y, labels), 1.0);
}

TEST(Accuracy, TiesGoToLowestClass) {
  const Matrix y(4, 3, 0.5);
  EXPECT_EQ(pinit::argmax_columns(y), (std::vector<std::size_t>{0, 0, 0}));
  const std::vector<pinit::Label> labels{0, 1, 0};
  EXPECT_NEAR(pinit::accuracy(y, labels), 2.0 / 3.0, 1e-15);
}

TEST(Accuracy, RandomScoresAgainstLoopOracle) {
  auto rng = pinit::make_rng(8);
  std::uniform_int_distribution<int> cls(0, 9);
  const Matrix y = random_matrix(10, 200, rng);
  std::vector<pinit::Label> labels(200);
  for (auto& l : labels) l = static_cast<pinit::Label>(cls(rng));
  int hits = 0;
  for (std::size_t j = 0; j < 200; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 10; ++i)
      if (y(i, j) > y(best, j)) best = i;
    hits += best == labels[j];
  }
  EXPECT_DOUBLE_EQ(pinit::accuracy(y, labels), hits / 200.0);
}

TEST(Accuracy, LabelOutOfRangeThrows) {
  const std::vector<pinit::Label> labels{12};
  EXPECT_THROW((void)pinit::accuracy(Matrix(10, 1), labels), std::out_of_range);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
  auto rng = pinit::make_rng(9);
  const std::vector<std::size_t> dims{784, 128, 100, 10};
  const MlpNetwork net = MlpNetwork::create(dims, rng);
  net.validate();
  ASSERT_EQ(net.depth(), 3u);
  for (const auto& layer : net.layers) {
    const double r = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (double w : layer.weights.values()) EXPECT_LE(std::abs(w), r);
    for (double b : layer.bias.values()) EXPECT_EQ(b, 0.0);
  }
}
