#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "battbench/bench.hpp"
#include "battbench/errors.hpp"
#include "battbench/forecast.hpp"
#include "battbench/mpc.hpp"
#include "battbench/ppo.hpp"
#include "battbench/report.hpp"
#include "battbench/series.hpp"
#include "battbench/settings.hpp"

namespace fs = std::filesystem;
using namespace battbench;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::optional<std::string> out;
  bool smoke = false;
};

struct Dataset {
  ExogenousSeries train;
  ExogenousSeries test;
  std::optional<ExogenousSeries> shifted_test;
};

/// Files written by a command, recorded in manifest.json.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {}

  fs::path add(const std::string& name, const std::string& kind, std::optional<std::uint64_t> seed = {}) {
    nlohmann::ordered_json entry{{"file", name}, {"kind", kind}};
    entry["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json();
    files_.push_back(std::move(entry));
    return dir_ / name;
  }

  void write(const RunConfig& cfg) const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["generator_seed"] = cfg.uses_csv() ? nlohmann::ordered_json() : nlohmann::ordered_json(cfg.generator.seed);
    j["controller_seeds"] = cfg.comparison.seeds;
    j["outputs"] = files_;
    std::ofstream out(dir_ / "manifest.json");
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir_ / "manifest.json").string());
  }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<nlohmann::ordered_json> files_;
};

RunConfig resolve_config(const Options& opt, bool seed_is_generator) {
  RunConfig cfg = opt.config.empty() ? RunConfig{} : load_run_config(opt.config);
  if (opt.seed) {
    if (seed_is_generator) {
      cfg.generator.seed = *opt.seed;
    } else {
      cfg.comparison.seeds = {*opt.seed};
    }
  }
  if (opt.horizon) cfg.comparison.horizon = *opt.horizon;
  if (opt.out) cfg.out_dir = *opt.out;
  if (opt.smoke) apply_smoke_budget(cfg);
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  if (cfg.uses_csv()) {
    d.train = load_csv(*cfg.train_csv);
    if (cfg.test_csv) {
      d.test = load_csv(*cfg.test_csv);
    } else {
      auto [train, test] = split(d.train, cfg.train_frac);
      d.train = std::move(train);
      d.test = std::move(test);
    }
    if (cfg.shifted_test_csv) d.shifted_test = load_csv(*cfg.shifted_test_csv);
    return d;
  }
  auto [train, test] = split(generate(cfg.generator), cfg.train_frac);
  d.train = std::move(train);
  d.test = std::move(test);
  GeneratorConfig shifted = cfg.generator;
  shifted.shift = cfg.shift;
  d.shifted_test = split(generate(shifted), cfg.train_frac).second;
  return d;
}

std::string agent_file(std::uint64_t seed) { return "rl_agent_seed" + std::to_string(seed) + ".txt"; }
std::string curve_file(std::uint64_t seed) { return "learning_curve_seed" + std::to_string(seed) + ".csv"; }
constexpr char kForecasterFile[] = "forecaster.txt";

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  writer(out);
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

void print_stats(const char* name, const ExogenousSeries& s) {
  std::cout << name << ": " << s.size() << " rows, " << format_timestamp(s.timestamps.front()) << " .. "
            << format_timestamp(s.timestamps.back()) << ", price mean " << s.prices.mean() << ", demand mean "
            << s.demands.mean() << '\n';
}

int cmd_gen_data(const Options& opt, bool with_shift) {
  const RunConfig cfg = resolve_config(opt, true);
  if (cfg.uses_csv()) throw Error(ErrorKind::Validation, "gen-data needs a generator config, not CSV inputs");
  const Dataset d = load_dataset(cfg);
  Manifest manifest(cfg.out_dir, "gen-data");
  write_csv(d.train, manifest.add("train.csv", "dataset", cfg.generator.seed));
  write_csv(d.test, manifest.add("test.csv", "dataset", cfg.generator.seed));
  print_stats("train", d.train);
  print_stats("test", d.test);
  if (with_shift) {
    write_csv(*d.shifted_test, manifest.add("test_shifted.csv", "dataset", cfg.generator.seed));
    print_stats("test_shifted", *d.shifted_test);
  }
  manifest.write(cfg);
  return 0;
}

int cmd_train(const Options& opt, const std::string& which) {
  const RunConfig cfg = resolve_config(opt, false);
  const Dataset d = load_dataset(cfg);
  Manifest manifest(cfg.out_dir, "train " + which);
  if (which == "forecaster") {
    const ForecasterModel model = fit(d.train, cfg.comparison.forecaster);
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
    save_model(model, manifest.add(kForecasterFile, "forecaster"));
    const ForecastErrors err = forecast_error(model, d.test, cfg.comparison.horizon, &d.train);
    std::cout << "forecaster " << to_string(model.kind) << " fitted on " << model.train_rows
              << " rows; test RMSE price " << err.price_rmse_overall << ", demand " << err.demand_rmse_overall
              << '\n';
  } else {
    for (std::uint64_t seed : cfg.comparison.seeds) {
      ppo::PpoConfig pc = cfg.comparison.ppo;
      pc.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      const ppo::TrainResult result = ppo::train(d.train, cfg.comparison.battery, pc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ppo::save_agent(result.agent, manifest.add(agent_file(seed), "rl_agent", seed));
      write_file(manifest.add(curve_file(seed), "learning_curve", seed),
                 [&](std::ostream& out) { ppo::write_curve_csv(result.curve, out); });
      std::cout << "seed " << seed << ": " << result.env_steps << " env steps in " << secs << " s\n";
    }
  }
  manifest.write(cfg);
  return 0;
}

// Env steps used by a stored agent: the last row of its learning curve.
long trained_steps(const fs::path& curve) {
  std::ifstream in(curve);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  const auto comma = last.find(',');
  if (comma == std::string::npos) return 0;
  try {
    return std::stol(last.substr(comma + 1));
  } catch (const std::exception&) {
    return 0;
  }
}

bench::TrainedControllers load_controllers(const RunConfig& cfg, const ExogenousSeries& train,
                                           const std::string& config_arg) {
  const std::string hint = config_arg.empty() ? "" : " --config " + config_arg;
  auto require = [&](const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) {
      throw Error(ErrorKind::Io, "missing checkpoint " + path.string() + "; run `battbench train " + what + hint +
                                     " --out " + cfg.out_dir.string() + "` first, or pass --train");
    }
  };
  bench::TrainedControllers t;
  const fs::path fpath = cfg.out_dir / kForecasterFile;
  require(fpath, "forecaster");
  t.forecaster = load_model(fpath);
  if (t.forecaster.kind != cfg.comparison.forecaster) {
    throw Error(ErrorKind::Validation, "checkpoint " + fpath.string() + " holds a " + to_string(t.forecaster.kind) +
                                           " model but the config asks for " + to_string(cfg.comparison.forecaster));
  }
  t.baseline = bench::BaselinePolicy::from(train);
  for (std::uint64_t seed : cfg.comparison.seeds) {
    const fs::path apath = cfg.out_dir / agent_file(seed);
    require(apath, "rl");
    t.agents.push_back(ppo::load_agent(apath));
    t.curves.emplace_back();
    t.rl_env_steps.push_back(trained_steps(cfg.out_dir / curve_file(seed)));
  }
  return t;
}

void write_report_files(const bench::EvalReport& report, const std::string& suffix, Manifest& manifest) {
  write_file(manifest.add("report" + suffix + ".txt", "report_table"),
             [&](std::ostream& out) { bench::write_table(report, out); });
  write_file(manifest.add("report" + suffix + ".json", "report_json"),
             [&](std::ostream& out) { out << bench::to_json(report) << '\n'; });
  write_file(manifest.add("summary" + suffix + ".csv", "summary_csv"),
             [&](std::ostream& out) { bench::write_summary_csv(report, out); });
  write_file(manifest.add("actions" + suffix + ".csv", "action_log"),
             [&](std::ostream& out) { bench::write_action_log_csv(report, out); });
}

int cmd_compare(const Options& opt, bool robustness, bool train_now, std::optional<std::size_t> plan_at) {
  const RunConfig cfg = resolve_config(opt, false);
  const Dataset d = load_dataset(cfg);
  Manifest manifest(cfg.out_dir, robustness ? "compare --robustness" : "compare");

  bench::TrainedControllers trained;
  if (train_now) {
    trained = bench::train_controllers(d.train, cfg.comparison);
    save_model(trained.forecaster, manifest.add(kForecasterFile, "forecaster"));
    for (std::size_t i = 0; i < cfg.comparison.seeds.size(); ++i) {
      const std::uint64_t seed = cfg.comparison.seeds[i];
      ppo::save_agent(trained.agents[i], manifest.add(agent_file(seed), "rl_agent", seed));
      write_file(manifest.add(curve_file(seed), "learning_curve", seed),
                 [&](std::ostream& out) { ppo::write_curve_csv(trained.curves[i], out); });
    }
  } else {
    trained = load_controllers(cfg, d.train, opt.config);
  }

  if (robustness) {
    if (!d.shifted_test) {
      throw Error(ErrorKind::Validation, "--robustness needs data.shifted_test_csv or a generator dataset");
    }
    const bench::RobustnessReport r = bench::run_robustness(trained, d.train, d.test, *d.shifted_test, cfg.comparison);
    write_report_files(r.unshifted, "", manifest);
    write_report_files(r.shifted, "_shifted", manifest);
    write_file(manifest.add("robustness.json", "robustness_json"),
               [&](std::ostream& out) { out << bench::to_json(r) << '\n'; });
    bench::write_table(r.unshifted, std::cout);
    std::cout << '\n';
    bench::write_table(r.shifted, std::cout);
    std::cout << "\nGap change under the demand shift (percentage points):\n";
    for (const auto& [name, delta] : r.gap_delta) std::cout << "  " << name << ": " << 100.0 * delta << '\n';
  } else {
    const bench::EvalReport report = bench::evaluate(trained, d.train, d.test, cfg.comparison);
    write_report_files(report, "", manifest);
    bench::write_table(report, std::cout);
  }

  if (plan_at) {
    if (*plan_at >= d.test.size()) throw Error(ErrorKind::Validation, "--plan-at is beyond the test series");
    const ForecastProvider provider = model_provider(trained.forecaster, d.train, d.test);
    const int horizon =
        static_cast<int>(std::min<std::size_t>(cfg.comparison.horizon, d.test.size() - 1 - *plan_at));
    const ForecastHorizon f = provider(*plan_at, horizon);
    const HorizonProblem problem{f.prices_hat, f.demands_hat, cfg.comparison.initial_soc(), cfg.comparison.battery};
    write_file(manifest.add("mpc_plan.csv", "mpc_plan"),
               [&](std::ostream& out) { write_plan_csv(problem, solve_horizon(problem), *plan_at, out); });
  }
  manifest.write(cfg);
  return 0;
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("-c,--config", opt.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "seed override");
  cmd->add_option("--horizon", opt.horizon, "MPC horizon T")->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out", opt.out, "output directory");
  cmd->add_flag("--smoke", opt.smoke, "reduced budgets for quick checks");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery arbitrage controller benchmark: RL vs MPC vs baseline"};
  app.require_subcommand(1);
  Options opt;

  auto* gen = app.add_subcommand("gen-data", "write synthetic train/test CSVs");
  add_common(gen, opt);
  bool with_shift = false;
  gen->add_flag("--shift", with_shift, "also write a demand-shifted test set");

  auto* train = app.add_subcommand("train", "fit the forecaster or train PPO agents");
  add_common(train, opt);
  std::string which;
  train->add_option("which", which, "rl | forecaster")->required()->check(CLI::IsMember({"rl", "forecaster"}));

  auto* compare = app.add_subcommand("compare", "evaluate all controllers on the test split");
  add_common(compare, opt);
  bool robustness = false, train_now = false;
  std::optional<std::size_t> plan_at;
  compare->add_flag("--robustness", robustness, "also evaluate on the demand-shifted test set");
  compare->add_flag("--train", train_now, "train controllers now instead of loading checkpoints");
  compare->add_option("--plan-at", plan_at, "write the MPC plan made at this test step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(opt, with_shift);
    if (*train) return cmd_train(opt, which);
    return cmd_compare(opt, robustness, train_now, plan_at);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
