#ifndef PINIT_CONFIG_HPP
#define PINIT_CONFIG_HPP

// Experiment description. Stored on disk as flat `key = value` lines; '#'
// starts a comment. Later assignments override earlier ones, which is how
// command-line overrides are layered on top of a config file.

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pinit/network.hpp"
#include "pinit/optimizer.hpp"
#include "pinit/strategies.hpp"

namespace pinit {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Architecture {
  Single,       // 784-10
  ThreeLayer,   // 784-128-100-10
  Autoencoder,  // 784-128-64-128-784
};

enum class Strategy { None, Random, KStarts, Dissipating, Combination };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Single: return "784-10";
    case Architecture::ThreeLayer: return "784-128-100-10";
    case Architecture::Autoencoder: return "autoencoder";
  }
  return "?";
}

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Random: return "random";
    case Strategy::KStarts: return "kstarts";
    case Strategy::Dissipating: return "dissipating";
    case Strategy::Combination: return "combination";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "784-10" || s == "single") return Architecture::Single;
  if (s == "784-128-100-10" || s == "three-layer") return Architecture::ThreeLayer;
  if (s == "autoencoder" || s == "784-128-64") return Architecture::Autoencoder;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "none") return Strategy::None;
  if (s == "random") return Strategy::Random;
  if (s == "kstarts") return Strategy::KStarts;
  if (s == "dissipating") return Strategy::Dissipating;
  if (s == "combination") return Strategy::Combination;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

/// Layer widths, input first.
inline std::vector<std::size_t> layer_dims(Architecture a, std::size_t input_dim = 784) {
  switch (a) {
    case Architecture::Single: return {input_dim, 10};
    case Architecture::ThreeLayer: return {input_dim, 128, 100, 10};
    case Architecture::Autoencoder: return {input_dim, 128, 64, 128, input_dim};
  }
  return {};
}

inline std::string default_data_dir() {
  if (const char* env = std::getenv("PINIT_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

struct ExperimentConfig {
  std::string dataset = "mnist";
  std::string data_dir = default_data_dir();
  Architecture arch = Architecture::Single;
  Strategy strategy = Strategy::KStarts;
  double p = 0.5;
  std::size_t k = 10;
  FitnessVariant fitness = FitnessVariant::Magnitude;
  FitnessSum fitness_sum = FitnessSum::Absolute;
  std::int64_t elimination_interval = 5;
  double epsilon = 1e-6;
  int active_epochs = 2;
  std::optional<double> dissipation_target;
  double lambda = 0.0;
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::int64_t iterations = 1000;
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  std::size_t train_size = 0;  // 0 = full training split
  std::size_t test_size = 0;   // 0 = full test split
  InitScheme init = InitScheme::Glorot;
  double init_scale = 1.0;     // standard deviation for init = normal
  bool exact_masks = false;    // exact-count masks instead of Bernoulli draws
  std::size_t threads = 1;
  std::int64_t log_every = 100;
  std::string out = "runs/latest";

  [[nodiscard]] KStartsConfig kstarts_config() const {
    return {k, elimination_interval, fitness, fitness_sum, exact_masks};
  }
  [[nodiscard]] DissipationConfig dissipation_config() const {
    return {epsilon, active_epochs, dissipation_target};
  }

  /// Throws ConfigError on the first invalid field.
  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (dataset != "mnist" && dataset != "fashion-mnist") fail("dataset must be mnist or fashion-mnist");
    if (!(p >= 0.0 && p <= 1.0)) fail("p must lie in [0, 1]");
    if (k < 1) fail("k must be >= 1");
    if (elimination_interval < 1) fail("elimination_interval must be >= 1");
    if (!(epsilon >= 0.0)) fail("epsilon must be >= 0");
    if (active_epochs < 1) fail("active_epochs must be >= 1");
    if (dissipation_target && !(*dissipation_target >= 0.0 && *dissipation_target <= 1.0)) {
      fail("dissipation_target must lie in [0, 1]");
    }
    if (!(lambda >= 0.0)) fail("lambda must be >= 0");
    if (!(adam.lr > 0.0)) fail("lr must be > 0");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) fail("beta1 must lie in (0, 1)");
    if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) fail("beta2 must lie in (0, 1)");
    if (!(adam.eps > 0.0)) fail("adam_eps must be > 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (iterations < 0) fail("iterations must be >= 0");
    if (trials < 1) fail("trials must be >= 1");
    if (!(init_scale > 0.0)) fail("init_scale must be > 0");
    if (threads < 1) fail("threads must be >= 1");
    if (log_every < 1) fail("log_every must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const auto n = to_integer(key, v);
  if (n < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace detail

/// Applies one `key = value` assignment.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  try {
    if (key == "dataset") c.dataset = value;
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "arch") c.arch = parse_architecture(value);
    else if (key == "strategy") c.strategy = parse_strategy(value);
    else if (key == "p") c.p = to_double(key, value);
    else if (key == "k") c.k = to_count(key, value);
    else if (key == "fitness") c.fitness = parse_fitness_variant(value);
    else if (key == "fitness_sum") {
      if (value == "absolute") c.fitness_sum = FitnessSum::Absolute;
      else if (value == "signed") c.fitness_sum = FitnessSum::Signed;
      else throw ConfigError("fitness_sum must be absolute or signed");
    }
    else if (key == "elimination_interval") c.elimination_interval = to_integer(key, value);
    else if (key == "epsilon") c.epsilon = to_double(key, value);
    else if (key == "active_epochs") c.active_epochs = static_cast<int>(to_integer(key, value));
    else if (key == "dissipation_target") {
      if (value == "none" || value.empty()) c.dissipation_target.reset();
      else c.dissipation_target = to_double(key, value);
    }
    else if (key == "lambda") c.lambda = to_double(key, value);
    else if (key == "lr") c.adam.lr = to_double(key, value);
    else if (key == "beta1") c.adam.beta1 = to_double(key, value);
    else if (key == "beta2") c.adam.beta2 = to_double(key, value);
    else if (key == "adam_eps") c.adam.eps = to_double(key, value);
    else if (key == "batch_size") c.batch_size = to_count(key, value);
    else if (key == "iterations") c.iterations = to_integer(key, value);
    else if (key == "trials") c.trials = to_count(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_count(key, value));
    else if (key == "train_size") c.train_size = to_count(key, value);
    else if (key == "test_size") c.test_size = to_count(key, value);
    else if (key == "init") {
      if (value == "glorot") c.init = InitScheme::Glorot;
      else if (value == "normal") c.init = InitScheme::Normal;
      else throw ConfigError("init must be glorot or normal");
    }
    else if (key == "init_scale") c.init_scale = to_double(key, value);
    else if (key == "exact_masks") c.exact_masks = to_bool(key, value);
    else if (key == "threads") c.threads = to_count(key, value);
    else if (key == "log_every") c.log_every = to_integer(key, value);
    else if (key == "out") c.out = value;
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

/// Parses `key = value` lines into ordered assignments.
inline std::vector<std::pair<std::string, std::string>> parse_assignments(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  return out;
}

inline void apply_config_text(ExperimentConfig& c, std::istream& in) {
  for (const auto& [key, value] : parse_assignments(in)) set_config_value(c, key, value);
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  apply_config_text(c, in);
}

/// Every field as `key = value`, in a fixed order; parsing it back yields the same config.
inline std::string to_config_text(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  os << "dataset = " << c.dataset << '\n'
     << "data_dir = " << c.data_dir << '\n'
     << "arch = " << to_string(c.arch) << '\n'
     << "strategy = " << to_string(c.strategy) << '\n'
     << "p = " << format_double(c.p) << '\n'
     << "k = " << c.k << '\n'
     << "fitness = " << to_string(c.fitness) << '\n'
     << "fitness_sum = " << (c.fitness_sum == FitnessSum::Absolute ? "absolute" : "signed") << '\n'
     << "elimination_interval = " << c.elimination_interval << '\n'
     << "epsilon = " << format_double(c.epsilon) << '\n'
     << "active_epochs = " << c.active_epochs << '\n'
     << "dissipation_target = "
     << (c.dissipation_target ? format_double(*c.dissipation_target) : std::string("none")) << '\n'
     << "lambda = " << format_double(c.lambda) << '\n'
     << "lr = " << format_double(c.adam.lr) << '\n'
     << "beta1 = " << format_double(c.adam.beta1) << '\n'
     << "beta2 = " << format_double(c.adam.beta2) << '\n'
     << "adam_eps = " << format_double(c.adam.eps) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "iterations = " << c.iterations << '\n'
     << "trials = " << c.trials << '\n'
     << "seed = " << c.seed << '\n'
     << "train_size = " << c.train_size << '\n'
     << "test_size = " << c.test_size << '\n'
     << "init = " << (c.init == InitScheme::Glorot ? "glorot" : "normal") << '\n'
     << "init_scale = " << format_double(c.init_scale) << '\n'
     << "exact_masks = " << (c.exact_masks ? "true" : "false") << '\n'
     << "threads = " << c.threads << '\n'
     << "log_every = " << c.log_every << '\n'
     << "out = " << c.out << '\n';
  return os.str();
}

}  // namespace pinit

#endif  // PINIT_CONFIG_HPP
