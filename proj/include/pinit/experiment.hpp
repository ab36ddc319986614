#ifndef PINIT_EXPERIMENT_HPP
#define PINIT_EXPERIMENT_HPP

// Seeded multi-trial training harness. A trial is fully determined by
// (config, trial index): its seed is config.seed + trial_index and every
// random draw comes from streams derived from that seed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pinit/config.hpp"
#include "pinit/mask.hpp"
#include "pinit/mnist.hpp"
#include "pinit/network.hpp"
#include "pinit/optimizer.hpp"
#include "pinit/rng.hpp"
#include "pinit/strategies.hpp"

namespace pinit {

struct LossSample {
  std::int64_t iteration;
  double loss;  // nmse + l1 on the training batch
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  /// Test accuracy in [0, 1] for classifiers, test reconstruction NMSE for
  /// the autoencoder.
  double metric = 0.0;
  std::vector<double> layer_sparsity;
  double sparsity = 0.0;  // pruned fraction over all weights
  std::vector<LossSample> loss_curve;
  std::vector<SparseMask> masks;  // final effective masks, empty for strategy none
  MlpNetwork network;
  double wall_seconds = 0.0;
};

struct AggregateResult {
  ExperimentConfig config;
  std::size_t trials = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  bool std_defined = false;
  double min = 0.0;
  double max = 0.0;
  double mean_sparsity = 0.0;
};

/// Called after every training iteration with the current effective masks.
using TrainObserver =
    std::function<void(std::int64_t iteration, const MlpNetwork&, std::span<const SparseMask>)>;

inline bool is_classifier(Architecture a) { return a != Architecture::Autoencoder; }

// ---------------------------------------------------------------------------
// statistics

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  bool std_defined = false;
  double min = 0.0;
  double max = 0.0;
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  // Guard against the mean drifting outside [min, max] by rounding.
  s.mean = std::clamp(s.mean, s.min, s.max);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.std_defined = true;
  }
  return s;
}

// ---------------------------------------------------------------------------
// evaluation

/// Test accuracy, evaluated in column chunks to bound memory.
inline double evaluate_accuracy(const MlpNetwork& net, const Dataset& test,
                                std::size_t chunk = 2000) {
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    const std::size_t end = std::min(start + chunk, test.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto pred = argmax_columns(predict(net, gather_columns(test.images, idx)));
    for (std::size_t j = 0; j < pred.size(); ++j) hits += pred[j] == test.labels[start + j];
  }
  return test.size() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(test.size());
}

/// Reconstruction NMSE over the whole test set (targets are the inputs).
inline double evaluate_reconstruction(const MlpNetwork& net, const Dataset& test,
                                      std::size_t chunk = 2000) {
  const double n = static_cast<double>(test.images.size());
  const double mu = total_sum(test.images) / n;
  double ss = 0.0;
  for (double v : test.images.values()) ss += (v - mu) * (v - mu);
  const double var = ss / (n - 1.0);
  if (!(var > 0.0)) throw DegenerateTargetError("reconstruction: constant test images");
  double se = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    const std::size_t end = std::min(start + chunk, test.size());
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix x = gather_columns(test.images, idx);
    const Matrix y = predict(net, x);
    auto a = y.values();
    auto b = x.values();
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return (se / n) / var;
}

// ---------------------------------------------------------------------------
// one trial

/// Trains one network under the configured strategy and evaluates it.
///
/// Per iteration: forward, backward, strategy bookkeeping on the gradient,
/// Adam step projected onto the current masks, then kstarts selection and
/// (at epoch boundaries, while active) dissipation pruning. An epoch is
/// ceil(train_size / batch_size) iterations.
inline TrialResult run_trial(const ExperimentConfig& config, std::size_t trial_index,
                             const DatasetSplits& data, const TrainObserver& observer = {}) {
  config.validate();
  const auto start_time = std::chrono::steady_clock::now();
  TrialResult result;
  result.trial = trial_index;
  result.seed = config.seed + trial_index;

  Rng init_rng = make_rng(result.seed, Stream::Init);
  Rng mask_rng = make_rng(result.seed, Stream::Masks);
  Rng data_rng = make_rng(result.seed, Stream::Data);
  Rng subset_rng = make_rng(result.seed, Stream::Subset);

  std::optional<Dataset> train_subset;
  if (config.train_size != 0 && config.train_size < data.train.size()) {
    train_subset = subset(data.train, config.train_size, subset_rng);
  } else if (config.train_size > data.train.size()) {
    throw ConfigError("train_size " + std::to_string(config.train_size) + " exceeds the " +
                      std::to_string(data.train.size()) + " available samples");
  }
  const Dataset& train = train_subset ? *train_subset : data.train;

  const auto dims = layer_dims(config.arch, train.features());
  MlpNetwork net = MlpNetwork::create(dims, init_rng, config.init, config.init_scale, config.lambda);
  AdamState adam = AdamState::for_network(net, config.adam);

  const bool uses_dissipation =
      config.strategy == Strategy::Dissipating || config.strategy == Strategy::Combination;

  std::optional<KStartsState> kstate;
  std::optional<DissipationState> dstate;
  std::vector<SparseMask> kmasks;
  std::vector<SparseMask> masks;

  switch (config.strategy) {
    case Strategy::None: break;
    case Strategy::Random:
      masks = random_dropout(net.layers, config.p, mask_rng, config.exact_masks);
      break;
    case Strategy::KStarts:
    case Strategy::Combination:
      kstate = make_kstarts(net.layers, config.p, config.kstarts_config(), mask_rng);
      kmasks = kstarts_select(net.layers, *kstate, 0);
      masks = kmasks;
      break;
    case Strategy::Dissipating: break;
  }
  if (uses_dissipation) {
    dstate = make_dissipation(net.layers, config.dissipation_config());
    masks = kstate ? combination_step(net.layers, *kstate, *dstate) : dstate->pruned;
  }

  BatchStream stream(train, config.batch_size, data_rng);
  const bool classifier = is_classifier(config.arch);
  for (std::int64_t it = 1; it <= config.iterations; ++it) {
    const Batch batch = stream.next();
    const Matrix& target = classifier ? batch.y : batch.x;
    const ForwardTrace trace = forward(net, batch.x);
    const Gradients grads = backward(net, trace, target);
    if (it % config.log_every == 0 || it == 1) {
      result.loss_curve.push_back({it, nmse(trace.output(), target) + l1_penalty(net)});
    }
    if (dstate && dstate->active()) dissipate_accumulate(*dstate, grads);
    if (kstate) kstarts_observe(*kstate, grads);

    masked_step(net.layers, grads, adam, masks);

    bool masks_changed = false;
    if (kstate) {
      kmasks = kstarts_select(net.layers, *kstate, it);
      masks_changed = true;
    }
    if (dstate && dstate->active() && stream.epoch_finished()) {
      dissipate_prune(net.layers, *dstate);
      masks_changed = true;
    }
    if (masks_changed) {
      if (kstate && dstate) {
        masks = combination_step(net.layers, *kstate, *dstate);
      } else if (kstate) {
        masks = kmasks;
      } else {
        masks = dstate->pruned;
      }
      project_onto_masks(net.layers, &adam, masks);
    }
    if (observer) observer(it, net, masks);
  }

  result.metric = classifier ? evaluate_accuracy(net, data.test)
                             : evaluate_reconstruction(net, data.test);
  if (masks.empty()) {
    for (const auto& layer : net.layers) {
      masks.push_back(SparseMask::ones(layer.weights.rows(), layer.weights.cols()));
    }
  }
  std::size_t pruned = 0;
  std::size_t total = 0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const std::size_t n = net.layers[l].weights.size();
    const std::size_t z = pruned_count(masks[l]);
    result.layer_sparsity.push_back(static_cast<double>(z) / static_cast<double>(n));
    pruned += z;
    total += n;
  }
  result.sparsity = static_cast<double>(pruned) / static_cast<double>(total);
  result.masks = std::move(masks);
  result.network = std::move(net);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

/// Test split clipped to config.test_size when set.
inline DatasetSplits clip_test_split(DatasetSplits data, std::size_t test_size) {
  if (test_size != 0 && test_size < data.test.size()) data.test = head(data.test, test_size);
  return data;
}

inline DatasetSplits load_experiment_data(const ExperimentConfig& config) {
  return clip_test_split(load_dataset(config.data_dir, config.dataset), config.test_size);
}

// ---------------------------------------------------------------------------
// many trials

struct ExperimentRun {
  std::vector<TrialResult> trials;  // ordered by trial index
  AggregateResult aggregate;
};

inline AggregateResult aggregate(const ExperimentConfig& config,
                                 std::span<const TrialResult> trials) {
  std::vector<double> metrics;
  std::vector<double> sparsities;
  for (const auto& t : trials) {
    metrics.push_back(t.metric);
    sparsities.push_back(t.sparsity);
  }
  const auto s = summarize(metrics);
  AggregateResult a;
  a.config = config;
  a.trials = trials.size();
  a.mean = s.mean;
  a.stddev = s.stddev;
  a.std_defined = s.std_defined;
  a.min = s.min;
  a.max = s.max;
  a.mean_sparsity = summarize(sparsities).mean;
  return a;
}

/// Runs config.trials trials on up to config.threads worker threads.
/// The first failing trial's error is rethrown, prefixed with its index.
inline ExperimentRun run_experiment(const ExperimentConfig& config, const DatasetSplits& data) {
  config.validate();
  ExperimentRun run;
  run.trials.resize(config.trials);
  std::vector<std::exception_ptr> errors(config.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.trials; i = next++) {
      try {
        run.trials[i] = run_trial(config, i, data);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(config.threads, config.trials);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ConfigError& e) {
      throw ConfigError("trial " + std::to_string(i) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("trial " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("trial " + std::to_string(i) + ": " + e.what());
    }
  }
  run.aggregate = aggregate(config, run.trials);
  return run;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

inline constexpr std::string_view kAggregateHeader =
    "dataset,arch,strategy,p,k,fitness,iterations,trials,mean_accuracy,std_accuracy,"
    "mean_sparsity,std_defined";

inline std::string aggregate_row(const AggregateResult& a) {
  const auto& c = a.config;
  std::ostringstream os;
  os << c.dataset << ',' << to_string(c.arch) << ',' << to_string(c.strategy) << ',' << fmt(c.p, 4)
     << ',' << c.k << ',' << to_string(c.fitness) << ',' << c.iterations << ',' << a.trials << ','
     << fmt(a.mean) << ',' << fmt(a.stddev) << ',' << fmt(a.mean_sparsity) << ','
     << (a.std_defined ? 1 : 0);
  return os.str();
}

inline void write_aggregate_csv(std::ostream& out, std::span<const AggregateResult> rows) {
  out << kAggregateHeader << '\n';
  for (const auto& r : rows) out << aggregate_row(r) << '\n';
}

inline constexpr std::string_view kTrialHeader =
    "dataset,arch,strategy,p,k,fitness,iterations,trial,seed,metric,sparsity,wall_seconds";

inline void write_trials_csv(std::ostream& out, const ExperimentConfig& c,
                             std::span<const TrialResult> trials, bool header = true) {
  if (header) out << kTrialHeader << '\n';
  for (const auto& t : trials) {
    out << c.dataset << ',' << to_string(c.arch) << ',' << to_string(c.strategy) << ','
        << fmt(c.p, 4) << ',' << c.k << ',' << to_string(c.fitness) << ',' << c.iterations << ','
        << t.trial << ',' << t.seed << ',' << fmt(t.metric) << ',' << fmt(t.sparsity) << ','
        << fmt(t.wall_seconds, 3) << '\n';
  }
}

inline void write_loss_curves_csv(std::ostream& out, std::span<const TrialResult> trials) {
  out << "trial,iteration,loss\n";
  for (const auto& t : trials) {
    for (const auto& s : t.loss_curve) out << t.trial << ',' << s.iteration << ',' << fmt(s.loss, 8) << '\n';
  }
}

// ---------------------------------------------------------------------------
// artifacts

/// Writes resolved config, per-trial metrics, loss curves, aggregate and
/// final masks under `dir`.
inline void write_run_artifacts(const std::filesystem::path& dir, const ExperimentRun& run) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "masks");
  {
    std::ofstream f(dir / "config.txt");
    f << to_config_text(run.aggregate.config);
  }
  {
    std::ofstream f(dir / "trials.csv");
    write_trials_csv(f, run.aggregate.config, run.trials);
  }
  {
    std::ofstream f(dir / "loss_curves.csv");
    write_loss_curves_csv(f, run.trials);
  }
  {
    std::ofstream f(dir / "aggregate.csv");
    write_aggregate_csv(f, std::span(&run.aggregate, 1));
  }
  for (const auto& t : run.trials) {
    for (std::size_t l = 0; l < t.masks.size(); ++l) {
      std::ofstream f(dir / "masks" /
                      ("trial" + std::to_string(t.trial) + "_layer" + std::to_string(l) + ".mask"));
      write_mask(f, t.masks[l]);
    }
  }
}

// ---------------------------------------------------------------------------
// experiment grids

/// A point label that is safe as a directory name, e.g. "kstarts_p0.50_k10_it1000".
inline std::string point_label(const ExperimentConfig& c) {
  std::ostringstream os;
  os << to_string(c.strategy) << "_p" << fmt(c.p, 2) << "_k" << c.k << "_it" << c.iterations;
  if (c.train_size != 0) os << "_n" << c.train_size;
  return os.str();
}

/// Runs one grid point and, when `artifacts` is set, stores its artifacts
/// in a sub-directory named after the point.
inline ExperimentRun run_point(const ExperimentConfig& c, const DatasetSplits& data,
                               const std::optional<std::filesystem::path>& artifacts) {
  auto run = run_experiment(c, data);
  if (artifacts) write_run_artifacts(*artifacts / point_label(c), run);
  return run;
}

/// Configures a point of a sparsity sweep. Dissipating gradients has no p of
/// its own; in a sweep p becomes its target sparsity.
inline ExperimentConfig sweep_point(ExperimentConfig c, Strategy s, double p) {
  c.strategy = s;
  c.p = p;
  if (s == Strategy::Dissipating) c.dissipation_target = p;
  return c;
}

/// One aggregate per (strategy, p), strategy-major.
inline std::vector<AggregateResult> sweep_p(const ExperimentConfig& base, std::span<const double> p_list,
                                            std::span<const Strategy> strategies,
                                            const DatasetSplits& data,
                                            const std::optional<std::filesystem::path>& artifacts = {}) {
  std::vector<AggregateResult> out;
  for (Strategy s : strategies) {
    for (double p : p_list) out.push_back(run_point(sweep_point(base, s, p), data, artifacts).aggregate);
  }
  return out;
}

inline std::vector<AggregateResult> sweep_k(const ExperimentConfig& base, std::span<const std::size_t> k_list,
                                            const DatasetSplits& data,
                                            const std::optional<std::filesystem::path>& artifacts = {}) {
  std::vector<AggregateResult> out;
  for (std::size_t k : k_list) {
    ExperimentConfig c = base;
    c.k = k;
    out.push_back(run_point(c, data, artifacts).aggregate);
  }
  return out;
}

struct LearningCurveRow {
  std::size_t n;
  double p;
  Strategy strategy;
  double mean;
  double stddev;
};

/// Accuracy after config.iterations steps on fixed training subsets of size n.
inline std::vector<LearningCurveRow> learning_curve(const ExperimentConfig& base,
                                                    std::span<const std::size_t> n_list,
                                                    std::span<const double> p_list,
                                                    const DatasetSplits& data,
                                                    const std::optional<std::filesystem::path>& artifacts = {}) {
  std::vector<LearningCurveRow> out;
  for (double p : p_list) {
    for (std::size_t n : n_list) {
      ExperimentConfig c = base;
      c.p = p;
      c.train_size = n >= data.train.size() ? 0 : n;
      const auto a = run_point(c, data, artifacts).aggregate;
      out.push_back({n, p, c.strategy, a.mean, a.stddev});
    }
  }
  return out;
}

inline void write_learning_curve_csv(std::ostream& out, std::span<const LearningCurveRow> rows) {
  out << "n,p,strategy,mean,std\n";
  for (const auto& r : rows) {
    out << r.n << ',' << fmt(r.p, 4) << ',' << to_string(r.strategy) << ',' << fmt(r.mean) << ','
        << fmt(r.stddev) << '\n';
  }
}

struct Table1 {
  std::vector<std::int64_t> iterations;
  std::vector<std::size_t> k_values;
  /// cells[row][0] is the unpruned baseline, cells[row][1 + j] is p = 0.5, k = k_values[j].
  std::vector<std::vector<AggregateResult>> cells;
};

/// Unpruned baseline and kstarts(p = 0.5, k) for each iteration budget.
inline Table1 table1(const ExperimentConfig& base, std::span<const std::int64_t> iterations,
                     std::span<const std::size_t> k_values, const DatasetSplits& data,
                     double sparse_p = 0.5,
                     const std::optional<std::filesystem::path>& artifacts = {}) {
  Table1 t;
  t.iterations.assign(iterations.begin(), iterations.end());
  t.k_values.assign(k_values.begin(), k_values.end());
  for (auto iters : iterations) {
    std::vector<AggregateResult> row;
    ExperimentConfig dense = base;
    dense.strategy = Strategy::None;
    dense.p = 0.0;
    dense.iterations = iters;
    row.push_back(run_point(dense, data, artifacts).aggregate);
    for (auto k : k_values) {
      ExperimentConfig sparse = base;
      sparse.strategy = Strategy::KStarts;
      sparse.p = sparse_p;
      sparse.k = k;
      sparse.iterations = iters;
      row.push_back(run_point(sparse, data, artifacts).aggregate);
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

/// Paper-style layout: one row per iteration budget, "mean ± std" in percent.
inline void write_table1_layout_csv(std::ostream& out, const Table1& t) {
  out << "iterations,p=0.0";
  for (auto k : t.k_values) out << ",p=0.5/k=" << k;
  out << '\n';
  for (std::size_t r = 0; r < t.cells.size(); ++r) {
    out << t.iterations[r];
    for (const auto& cell : t.cells[r]) {
      out << ',' << fmt(100.0 * cell.mean, 2) << " ± " << fmt(100.0 * cell.stddev, 2);
    }
    out << '\n';
  }
}

inline std::vector<AggregateResult> flatten(const Table1& t) {
  std::vector<AggregateResult> out;
  for (const auto& row : t.cells) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace pinit

#endif  // PINIT_EXPERIMENT_HPP
