#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pinit/experiment.hpp"

namespace fs = std::filesystem;
using pinit::ExperimentConfig;
using pinit::Strategy;

namespace {

// Ten noisy class prototypes in 20 dimensions.
pinit::Dataset synthetic(std::size_t n, std::uint64_t seed) {
  auto rng = pinit::make_rng(seed);
  std::uniform_real_distribution<double> proto(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.15);
  auto proto_rng = pinit::make_rng(12345);
  pinit::Matrix prototypes(20, 10);
  for (double& v : prototypes.values()) v = proto(proto_rng);
  pinit::Dataset d;
  d.name = "synthetic";
  d.images = pinit::Matrix(20, n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto label = static_cast<pinit::Label>(j % 10);
    d.labels.push_back(label);
    for (std::size_t i = 0; i < 20; ++i) d.images(i, j) = std::clamp(prototypes(i, label) + noise(rng), 0.0, 1.0);
  }
  return d;
}

const pinit::DatasetSplits& data() {
  static const pinit::DatasetSplits d{synthetic(300, 1), synthetic(100, 2)};
  return d;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.iterations = 60;
  c.batch_size = 32;
  c.trials = 3;
  c.k = 4;
  c.p = 0.5;
  c.log_every = 10;
  c.adam.lr = 0.01;
  return c;
}

void expect_same_network(const pinit::MlpNetwork& a, const pinit::MlpNetwork& b) {
  ASSERT_EQ(a.depth(), b.depth());
  for (std::size_t l = 0; l < a.depth(); ++l) {
    EXPECT_EQ(a.layers[l].weights, b.layers[l].weights) << "layer " << l;
    EXPECT_EQ(a.layers[l].bias, b.layers[l].bias) << "layer " << l;
  }
}

}  // namespace

TEST(Summarize, SampleStandardDeviation) {
  const std::vector<double> v{0.8, 0.9, 1.0};
  const auto s = pinit::summarize(v);
  EXPECT_NEAR(s.mean, 0.9, 1e-15);
  EXPECT_NEAR(s.stddev, 0.1, 1e-15);
  EXPECT_TRUE(s.std_defined);
  EXPECT_EQ(s.min, 0.8);
  EXPECT_EQ(s.max, 1.0);
}

TEST(Summarize, SingleTrialHasUndefinedStd) {
  const std::vector<double> v{0.42};
  const auto s = pinit::summarize(v);
  EXPECT_EQ(s.mean, 0.42);
  EXPECT_EQ(s.stddev, 0.0);
  EXPECT_FALSE(s.std_defined);
}

TEST(Summarize, MeanStaysWithinRange) {
  auto rng = pinit::make_rng(3);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(10, d(rng));
    const auto s = pinit::summarize(v);
    EXPECT_GE(s.mean, s.min);
    EXPECT_LE(s.mean, s.max);
  }
}

TEST(RunTrial, RepeatedRunIsBitIdentical) {
  for (Strategy s : {Strategy::None, Strategy::Random, Strategy::KStarts, Strategy::Dissipating,
                     Strategy::Combination}) {
    auto c = small_config();
    c.strategy = s;
    c.epsilon = 1e-3;
    const auto a = pinit::run_trial(c, 1, data());
    const auto b = pinit::run_trial(c, 1, data());
    expect_same_network(a.network, b.network);
    EXPECT_EQ(a.metric, b.metric);
    EXPECT_EQ(a.masks, b.masks);
    ASSERT_EQ(a.loss_curve.size(), b.loss_curve.size());
    for (std::size_t i = 0; i < a.loss_curve.size(); ++i) EXPECT_EQ(a.loss_curve[i].loss, b.loss_curve[i].loss);
    EXPECT_EQ(a.seed, c.seed + 1);
  }
}

TEST(RunTrial, NoneEqualsRandomWithZeroP) {
  auto none = small_config();
  none.strategy = Strategy::None;
  auto random = none;
  random.strategy = Strategy::Random;
  random.p = 0.0;
  const auto a = pinit::run_trial(none, 0, data());
  const auto b = pinit::run_trial(random, 0, data());
  expect_same_network(a.network, b.network);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.metric, b.metric);
  EXPECT_EQ(b.sparsity, 0.0);
}

TEST(RunTrial, KStartsWithOneCandidateEqualsRandomDropout) {
  auto ks = small_config();
  ks.strategy = Strategy::KStarts;
  ks.k = 1;
  auto random = ks;
  random.strategy = Strategy::Random;
  for (std::size_t trial = 0; trial < 3; ++trial) {
    const auto a = pinit::run_trial(ks, trial, data());
    const auto b = pinit::run_trial(random, trial, data());
    expect_same_network(a.network, b.network);
    EXPECT_EQ(a.masks, b.masks);
    EXPECT_EQ(a.metric, b.metric);
  }
}

TEST(RunTrial, CombinationWithZeroEpsilonEqualsKStarts) {
  auto ks = small_config();
  ks.strategy = Strategy::KStarts;
  auto comb = ks;
  comb.strategy = Strategy::Combination;
  comb.epsilon = 0.0;
  const auto a = pinit::run_trial(ks, 2, data());
  const auto b = pinit::run_trial(comb, 2, data());
  expect_same_network(a.network, b.network);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.metric, b.metric);
}

TEST(RunTrial, PrunedWeightsAreZeroAfterEveryStep) {
  for (Strategy s : {Strategy::Random, Strategy::KStarts, Strategy::Dissipating, Strategy::Combination}) {
    auto c = small_config();
    c.strategy = s;
    c.epsilon = 1e-2;
    c.active_epochs = 3;
    std::vector<pinit::SparseMask> prev_dissipation;
    pinit::run_trial(c, 0, data(), [&](std::int64_t, const pinit::MlpNetwork& net,
                                       std::span<const pinit::SparseMask> masks) {
      ASSERT_EQ(masks.size(), net.depth());
      for (std::size_t l = 0; l < net.depth(); ++l) {
        for (std::size_t i = 0; i < masks[l].bits().size(); ++i) {
          if (masks[l].bits().values()[i] == 0.0) ASSERT_EQ(net.layers[l].weights.values()[i], 0.0);
        }
      }
      if (s == Strategy::Dissipating) {
        if (!prev_dissipation.empty()) {
          for (std::size_t l = 0; l < masks.size(); ++l) {
            ASSERT_EQ(pinit::intersect(masks[l], prev_dissipation[l]), masks[l]);
          }
        }
        prev_dissipation.assign(masks.begin(), masks.end());
      }
    });
  }
}

TEST(RunTrial, LearnsSyntheticClasses) {
  auto c = small_config();
  c.strategy = Strategy::None;
  c.iterations = 300;
  EXPECT_GT(pinit::run_trial(c, 0, data()).metric, 0.8);
}

TEST(RunTrial, TrainSizeSubsetsAndValidates) {
  auto c = small_config();
  c.train_size = 50;
  EXPECT_NO_THROW((void)pinit::run_trial(c, 0, data()));
  c.train_size = 301;
  EXPECT_THROW((void)pinit::run_trial(c, 0, data()), pinit::ConfigError);
}

TEST(RunTrial, AutoencoderReportsReconstructionError) {
  auto c = small_config();
  c.arch = pinit::Architecture::Autoencoder;
  c.strategy = Strategy::Random;
  c.iterations = 20;
  const auto t = pinit::run_trial(c, 0, data());
  EXPECT_EQ(t.network.layers.back().weights.rows(), 20u);
  EXPECT_GT(t.metric, 0.0);
  EXPECT_EQ(t.layer_sparsity.size(), 4u);
}

TEST(RunExperiment, ThreadCountDoesNotChangeResults) {
  auto c = small_config();
  c.strategy = Strategy::KStarts;
  const auto serial = pinit::run_experiment(c, data());
  c.threads = 3;
  const auto parallel = pinit::run_experiment(c, data());
  ASSERT_EQ(serial.trials.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial.trials[i].metric, parallel.trials[i].metric);
    EXPECT_EQ(serial.trials[i].trial, i);
  }
  EXPECT_EQ(serial.aggregate.mean, parallel.aggregate.mean);
  EXPECT_EQ(serial.aggregate.stddev, parallel.aggregate.stddev);
}

TEST(RunExperiment, AggregateMatchesTrialOracle) {
  auto c = small_config();
  c.strategy = Strategy::Random;
  c.trials = 4;
  const auto run = pinit::run_experiment(c, data());
  double mean = 0;
  for (const auto& t : run.trials) mean += t.metric;
  mean /= 4;
  double ss = 0;
  for (const auto& t : run.trials) ss += (t.metric - mean) * (t.metric - mean);
  EXPECT_NEAR(run.aggregate.mean, mean, 1e-15);
  EXPECT_NEAR(run.aggregate.stddev, std::sqrt(ss / 3), 1e-15);
  EXPECT_TRUE(run.aggregate.std_defined);
  c.trials = 1;
  EXPECT_FALSE(pinit::run_experiment(c, data()).aggregate.std_defined);
}

TEST(Artifacts, MaskFilesAgreeWithReportedSparsity) {
  auto c = small_config();
  c.strategy = Strategy::Combination;
  c.epsilon = 1e-2;
  const auto run = pinit::run_experiment(c, data());
  const fs::path dir = fs::temp_directory_path() / "pinit_artifacts_test";
  fs::remove_all(dir);
  pinit::write_run_artifacts(dir, run);
  for (const char* f : {"config.txt", "trials.csv", "loss_curves.csv", "aggregate.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream trials(dir / "trials.csv");
  std::string line;
  std::getline(trials, line);
  EXPECT_EQ(line, pinit::kTrialHeader);
  for (const auto& t : run.trials) {
    std::getline(trials, line);
    std::size_t pruned = 0, total = 0;
    for (std::size_t l = 0; l < t.network.depth(); ++l) {
      std::ifstream mf(dir / "masks" / ("trial" + std::to_string(t.trial) + "_layer" + std::to_string(l) + ".mask"));
      ASSERT_TRUE(mf) << "missing mask file";
      const auto m = pinit::read_mask(mf);
      pruned += pinit::pruned_count(m);
      total += m.bits().size();
    }
    const std::string sparsity = pinit::fmt(static_cast<double>(pruned) / static_cast<double>(total));
    EXPECT_NE(line.find("," + sparsity + ","), std::string::npos) << line;
  }
  std::ifstream config_file(dir / "config.txt");
  ExperimentConfig back;
  pinit::apply_config_text(back, config_file);
  EXPECT_EQ(pinit::to_config_text(back), pinit::to_config_text(c));
  fs::remove_all(dir);
}

TEST(Csv, AggregateSchema) {
  std::ostringstream os;
  pinit::write_aggregate_csv(os, {});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "dataset,arch,strategy,p,k,fitness,iterations,trials,mean_accuracy,std_accuracy,mean_sparsity,std_defined");
}

TEST(Grids, SweepPointsAndLearningCurve) {
  auto c = small_config();
  c.trials = 2;
  c.iterations = 20;
  const std::vector<double> ps{0.1, 0.9};
  const std::vector<Strategy> strategies{Strategy::Random, Strategy::Dissipating};
  const auto rows = pinit::sweep_p(c, ps, strategies, data());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2].config.strategy, Strategy::Dissipating);
  EXPECT_NEAR(rows[3].mean_sparsity, 0.9, 0.01);

  const std::vector<std::size_t> ns{50, 300};
  const std::vector<double> curve_p{0.0};
  const auto curve = pinit::learning_curve(c, ns, curve_p, data());
  ASSERT_EQ(curve.size(), 2u);
  // n = full training set is the same experiment as the plain point
  auto full = c;
  full.p = 0.0;
  EXPECT_EQ(curve[1].mean, pinit::run_experiment(full, data()).aggregate.mean);
  std::ostringstream os;
  pinit::write_learning_curve_csv(os, curve);
  EXPECT_EQ(os.str().substr(0, 21), "n,p,strategy,mean,std");
}

TEST(Grids, Table1LayoutHasOneRowPerBudget) {
  auto c = small_config();
  c.trials = 2;
  const std::vector<std::int64_t> iters{5, 10};
  const std::vector<std::size_t> ks{1, 2};
  const auto t = pinit::table1(c, iters, ks, data());
  ASSERT_EQ(t.cells.size(), 2u);
  ASSERT_EQ(t.cells[0].size(), 3u);
  EXPECT_EQ(t.cells[0][0].config.strategy, Strategy::None);
  EXPECT_EQ(t.cells[1][2].config.k, 2u);
  EXPECT_EQ(pinit::flatten(t).size(), 6u);
  std::ostringstream os;
  pinit::write_table1_layout_csv(os, t);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "iterations,p=0.0,p=0.5/k=1,p=0.5/k=2");
}
