// pinit: train sparse-at-initialisation networks and reproduce the sparsity
// experiments. Exit codes: 0 success, 2 configuration error, 3 data error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "pinit/pinit.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

/// Flags shared by every experiment subcommand. Each one maps onto a config key.
struct CommonFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> raw_sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    bind(cmd, "--dataset", "dataset", "mnist or fashion-mnist");
    bind(cmd, "--data-dir", "data_dir", "directory holding <dataset>/*-ubyte files");
    bind(cmd, "--arch", "arch", "784-10, 784-128-100-10 or autoencoder");
    bind(cmd, "--strategy", "strategy", "none, random, kstarts, dissipating or combination");
    bind(cmd, "--p", "p", "connectivity factor (fraction of weights removed)");
    bind(cmd, "--k", "k", "kstarts population size");
    bind(cmd, "--fitness", "fitness", "magnitude, gradient or sumgrad");
    bind(cmd, "--epsilon", "epsilon", "dissipating-gradients threshold");
    bind(cmd, "--iterations", "iterations", "optimizer steps per trial");
    bind(cmd, "--trials", "trials", "trials per configuration");
    bind(cmd, "--seed", "seed", "base seed; trial i uses seed + i");
    bind(cmd, "--out", "out", "artifact directory");
    bind(cmd, "--threads", "threads", "worker threads for trials");
    cmd->add_option("--set", raw_sets, "extra key=value override (repeatable)");
  }

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
  }

  /// defaults < config file < command line
  pinit::ExperimentConfig resolve(pinit::ExperimentConfig defaults) const {
    pinit::ExperimentConfig c = std::move(defaults);
    if (!config_path.empty()) pinit::apply_config_file(c, config_path);
    for (const auto& [k, v] : overrides) pinit::set_config_value(c, k, v);
    for (const auto& s : raw_sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw pinit::ConfigError("--set expects key=value, got '" + s + "'");
      pinit::set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }

  [[nodiscard]] bool overrides_key(const std::string& key) const {
    for (const auto& [k, v] : overrides) {
      if (k == key) return true;
    }
    for (const auto& s : raw_sets) {
      if (s.rfind(key + "=", 0) == 0) return true;
    }
    return false;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw pinit::ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw pinit::ConfigError(std::string(what) + " is empty");
  return out;
}

std::vector<pinit::Strategy> parse_strategies(const std::string& text) {
  std::vector<pinit::Strategy> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(pinit::parse_strategy(item));
  return out;
}

void save_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  f << text;
}

void save_config(const std::filesystem::path& dir, const pinit::ExperimentConfig& c) {
  save_text(dir / "config.txt", pinit::to_config_text(c));
}

std::string aggregate_csv(std::span<const pinit::AggregateResult> rows) {
  std::ostringstream os;
  pinit::write_aggregate_csv(os, rows);
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pruning-at-initialisation experiments on MNIST / Fashion-MNIST"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "run one configuration for --trials trials");
  train_flags.attach(train);

  CommonFlags sweep_p_flags;
  std::string p_list_text = "0.1,0.3,0.5,0.7,0.9,0.95";
  std::string strategies_text = "random,kstarts,dissipating,combination";
  auto* sweep_p_cmd = app.add_subcommand("sweep-p", "accuracy against sparsity for several strategies");
  sweep_p_flags.attach(sweep_p_cmd);
  sweep_p_cmd->add_option("--p-list", p_list_text, "comma-separated p values");
  sweep_p_cmd->add_option("--strategies", strategies_text, "comma-separated strategies");

  CommonFlags sweep_k_flags;
  std::string k_list_text = "1,10,50,100";
  auto* sweep_k_cmd = app.add_subcommand("sweep-k", "kstarts accuracy against population size");
  sweep_k_flags.attach(sweep_k_cmd);
  sweep_k_cmd->add_option("--k-list", k_list_text, "comma-separated k values");

  CommonFlags curve_flags;
  std::string n_list_text = "100,500,1000,5000,10000,60000";
  std::string curve_p_text = "0.0,0.3,0.5,0.7";
  auto* curve_cmd = app.add_subcommand("learning-curve", "accuracy against training-set size");
  curve_flags.attach(curve_cmd);
  curve_cmd->add_option("--n-list", n_list_text, "comma-separated training-set sizes");
  curve_cmd->add_option("--p-list", curve_p_text, "comma-separated p values");

  CommonFlags table_flags;
  std::string table_iters_text = "10,100,1000,10000";
  std::string table_k_text = "1,10,50,100";
  auto* table_cmd = app.add_subcommand("table1", "baseline vs kstarts(p=0.5) over iterations and k");
  table_flags.attach(table_cmd);
  table_cmd->add_option("--iterations-list", table_iters_text, "comma-separated iteration budgets");
  table_cmd->add_option("--k-list", table_k_text, "comma-separated k values");

  pinit::GradCheckSuiteOptions gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of backpropagation");
  grad_cmd->add_option("--seeds", gc.seeds, "number of random networks");
  grad_cmd->add_option("--seed", gc.base_seed, "first seed");
  grad_cmd->add_option("--lambda", gc.lambda, "L1 coefficient");
  grad_cmd->add_option("--step", gc.check.step, "finite-difference step");
  grad_cmd->add_option("--tolerance", gc.check.relative_tolerance, "relative tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*grad_cmd) {
      const auto report = pinit::run_gradcheck_suite(gc);
      std::cout << "coordinates," << report.coordinates << '\n'
                << "within_tolerance," << report.within_tolerance << '\n'
                << "pass_fraction," << pinit::fmt(report.pass_fraction()) << '\n'
                << "max_relative_error," << report.max_relative_error << '\n';
      const bool ok = report.pass_fraction() >= 0.99 && report.max_relative_error < 1e-3;
      std::cout << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? 0 : 1;
    }

    if (*train) {
      const auto config = train_flags.resolve({});
      const auto data = pinit::load_experiment_data(config);
      const auto run = pinit::run_experiment(config, data);
      pinit::write_run_artifacts(config.out, run);
      pinit::write_aggregate_csv(std::cout, std::span(&run.aggregate, 1));
      return 0;
    }

    if (*sweep_p_cmd) {
      const auto config = sweep_p_flags.resolve({});
      const auto p_list = parse_list<double>(p_list_text, "--p-list");
      const auto strategies = parse_strategies(strategies_text);
      const auto data = pinit::load_experiment_data(config);
      const std::filesystem::path out = config.out;
      save_config(out, config);
      const auto rows = pinit::sweep_p(config, p_list, strategies, data, out);
      const auto csv = aggregate_csv(rows);
      save_text(out / "aggregate.csv", csv);
      std::cout << csv;
      return 0;
    }

    if (*sweep_k_cmd) {
      const auto config = sweep_k_flags.resolve({});
      const auto k_list = parse_list<std::size_t>(k_list_text, "--k-list");
      const auto data = pinit::load_experiment_data(config);
      const std::filesystem::path out = config.out;
      save_config(out, config);
      const auto rows = pinit::sweep_k(config, k_list, data, out);
      const auto csv = aggregate_csv(rows);
      save_text(out / "aggregate.csv", csv);
      std::cout << csv;
      return 0;
    }

    if (*curve_cmd) {
      pinit::ExperimentConfig defaults;
      defaults.iterations = 2500;
      const auto config = curve_flags.resolve(defaults);
      const auto n_list = parse_list<std::size_t>(n_list_text, "--n-list");
      const auto p_list = parse_list<double>(curve_p_text, "--p-list");
      const auto data = pinit::load_experiment_data(config);
      for (auto n : n_list) {
        if (n == 0 || n > data.train.size()) {
          throw pinit::ConfigError("--n-list entry " + std::to_string(n) + " outside [1, " +
                                   std::to_string(data.train.size()) + "]");
        }
      }
      const std::filesystem::path out = config.out;
      save_config(out, config);
      const auto rows = pinit::learning_curve(config, n_list, p_list, data, out);
      std::ostringstream os;
      pinit::write_learning_curve_csv(os, rows);
      save_text(out / "learning_curve.csv", os.str());
      std::cout << os.str();
      return 0;
    }

    if (*table_cmd) {
      const auto config = table_flags.resolve({});
      const auto iters = parse_list<std::int64_t>(table_iters_text, "--iterations-list");
      const auto ks = parse_list<std::size_t>(table_k_text, "--k-list");
      const auto data = pinit::load_experiment_data(config);
      const std::filesystem::path out = config.out;
      save_config(out, config);
      const auto table = pinit::table1(config, iters, ks, data, 0.5, out);
      const auto csv = aggregate_csv(pinit::flatten(table));
      save_text(out / "aggregate.csv", csv);
      std::ostringstream layout;
      pinit::write_table1_layout_csv(layout, table);
      save_text(out / "table1.csv", layout.str());
      std::cout << layout.str();
      return 0;
    }
  } catch (const pinit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const pinit::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
