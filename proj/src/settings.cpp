#include "battbench/settings.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "battbench/errors.hpp"
#include "battbench/text_io.hpp"

namespace battbench {

namespace {

namespace pt = boost::property_tree;

const std::set<std::string> kKnownKeys = {
    "data.train_csv", "data.test_csv", "data.shifted_test_csv", "data.train_frac",
    "generator.seed", "generator.days", "generator.start", "generator.price_base", "generator.price_daily_amp",
    "generator.price_noise_sd", "generator.demand_base", "generator.demand_daily_amp",
    "generator.demand_weekend_scale", "generator.demand_noise_sd",
    "shift.demand_mean_scale", "shift.demand_shape_skew",
    "battery.capacity_kwh", "battery.soc_min", "battery.soc_max", "battery.a_max", "battery.step_hours",
    "battery.soc0",
    "mpc.horizon",
    "forecast.kind",
    "ppo.clip_eps", "ppo.gae_lambda", "ppo.gamma", "ppo.lr", "ppo.rollout_steps", "ppo.minibatch",
    "ppo.epochs_per_update", "ppo.total_env_steps", "ppo.entropy_coef", "ppo.value_coef", "ppo.max_grad_norm",
    "ppo.episode_length", "ppo.hidden", "ppo.arbitrage_reward", "ppo.anneal_lr",
    "run.seeds", "run.out",
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& key, T& target) const {
    const auto node = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!node) return;
    try {
      target = convert<T>(*node);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, "config key '" + key + "': cannot parse '" + *node + "'");
    }
  }

  template <typename T>
  void get_list(const std::string& key, std::vector<T>& target) const {
    const auto node = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!node) return;
    target.clear();
    for (const auto& item : split_list(*node)) {
      try {
        target.push_back(convert<T>(item));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Validation, "config key '" + key + "': cannot parse '" + item + "'");
      }
    }
  }

  bool has(const std::string& key) const {
    return tree_.get_optional<std::string>(pt::ptree::path_type(key, '.')).has_value();
  }

 private:
  template <typename T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, double>) {
      return text_io::parse_double(s);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw std::invalid_argument(s);
    } else if constexpr (std::is_integral_v<T>) {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<T>(v);
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const pt::ptree& tree_;
};

}  // namespace

void RunConfig::validate() const {
  if (train_csv && generator_configured) {
    throw Error(ErrorKind::Validation, "config names both CSV files and a [generator] section; pick one dataset source");
  }
  if (test_csv && !train_csv) throw Error(ErrorKind::Validation, "data.test_csv given without data.train_csv");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error(ErrorKind::Validation, "data.train_frac must lie in (0, 1)");
  generator.validate();
  comparison.battery.validate();
  comparison.ppo.validate();
  if (comparison.horizon < 1) throw Error(ErrorKind::Validation, "mpc.horizon must be >= 1");
  if (comparison.seeds.empty()) throw Error(ErrorKind::Validation, "run.seeds must list at least one seed");
  if (comparison.soc0) comparison.battery.lattice_level(*comparison.soc0);
  if (shift.demand_mean_scale <= 0.0) throw Error(ErrorKind::Validation, "shift.demand_mean_scale must be positive");
}

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(ErrorKind::Validation, "config: key '" + section + "' outside any [section]");
    for (const auto& [key, value] : body) {
      if (!kKnownKeys.contains(section + "." + key)) {
        throw Error(ErrorKind::Validation, "config: unknown key '" + section + "." + key + "'");
      }
    }
  }

  RunConfig c;
  const Reader r(tree);
  std::string path;
  if (r.has("data.train_csv")) { r.get("data.train_csv", path); c.train_csv = path; }
  if (r.has("data.test_csv")) { r.get("data.test_csv", path); c.test_csv = path; }
  if (r.has("data.shifted_test_csv")) { r.get("data.shifted_test_csv", path); c.shifted_test_csv = path; }
  r.get("data.train_frac", c.train_frac);

  c.generator_configured = tree.get_child_optional("generator").has_value();
  auto& g = c.generator;
  r.get("generator.seed", g.seed);
  r.get("generator.days", g.days);
  if (r.has("generator.start")) {
    std::string start;
    r.get("generator.start", start);
    g.start = parse_timestamp(start);
  }
  r.get("generator.price_base", g.price_base);
  r.get("generator.price_daily_amp", g.price_daily_amp);
  r.get("generator.price_noise_sd", g.price_noise_sd);
  r.get("generator.demand_base", g.demand_base);
  r.get("generator.demand_daily_amp", g.demand_daily_amp);
  r.get("generator.demand_weekend_scale", g.demand_weekend_scale);
  r.get("generator.demand_noise_sd", g.demand_noise_sd);

  r.get("shift.demand_mean_scale", c.shift.demand_mean_scale);
  r.get("shift.demand_shape_skew", c.shift.demand_shape_skew);

  auto& cmp = c.comparison;
  r.get("battery.capacity_kwh", cmp.battery.capacity_kwh);
  r.get("battery.soc_min", cmp.battery.soc_min);
  r.get("battery.soc_max", cmp.battery.soc_max);
  r.get("battery.a_max", cmp.battery.a_max);
  r.get("battery.step_hours", cmp.battery.step_hours);
  if (r.has("battery.soc0")) {
    double soc0 = 0.0;
    r.get("battery.soc0", soc0);
    cmp.soc0 = soc0;
  }
  r.get("mpc.horizon", cmp.horizon);
  if (r.has("forecast.kind")) {
    std::string kind;
    r.get("forecast.kind", kind);
    cmp.forecaster = forecaster_kind_from_string(kind);
  }

  auto& p = cmp.ppo;
  r.get("ppo.clip_eps", p.clip_eps);
  r.get("ppo.gae_lambda", p.gae_lambda);
  r.get("ppo.gamma", p.gamma);
  r.get("ppo.lr", p.lr);
  r.get("ppo.rollout_steps", p.rollout_steps);
  r.get("ppo.minibatch", p.minibatch);
  r.get("ppo.epochs_per_update", p.epochs_per_update);
  r.get("ppo.total_env_steps", p.total_env_steps);
  r.get("ppo.entropy_coef", p.entropy_coef);
  r.get("ppo.value_coef", p.value_coef);
  r.get("ppo.max_grad_norm", p.max_grad_norm);
  r.get("ppo.episode_length", p.episode_length);
  r.get("ppo.arbitrage_reward", p.arbitrage_reward);
  r.get("ppo.anneal_lr", p.anneal_lr);
  r.get_list("ppo.hidden", p.hidden);

  r.get_list("run.seeds", cmp.seeds);
  if (r.has("run.out")) {
    r.get("run.out", path);
    c.out_dir = path;
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  return parse_run_config(in);
}

void apply_smoke_budget(RunConfig& config) {
  auto& p = config.comparison.ppo;
  p.total_env_steps = std::min<long>(p.total_env_steps, 10'000);
  p.rollout_steps = std::min(p.rollout_steps, 2048);
  p.epochs_per_update = std::min(p.epochs_per_update, 4);
  if (config.comparison.seeds.size() > 2) config.comparison.seeds.resize(2);
}

}  // namespace battbench
