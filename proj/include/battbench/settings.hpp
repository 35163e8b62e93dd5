#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "battbench/bench.hpp"
#include "battbench/series.hpp"

namespace battbench {

/// Everything a CLI run needs. Loaded from an INI-style key-value file:
///
///   [data]       train_csv, test_csv, shifted_test_csv, train_frac
///   [generator]  seed, days, start, price_base, price_daily_amp, price_noise_sd,
///                demand_base, demand_daily_amp, demand_weekend_scale, demand_noise_sd
///   [shift]      demand_mean_scale, demand_shape_skew
///   [battery]    capacity_kwh, soc_min, soc_max, a_max, step_hours, soc0
///   [mpc]        horizon
///   [forecast]   kind
///   [ppo]        clip_eps, gae_lambda, gamma, lr, rollout_steps, minibatch,
///                epochs_per_update, total_env_steps, entropy_coef, value_coef,
///                max_grad_norm, episode_length, hidden, arbitrage_reward,
///                anneal_lr
///   [run]        seeds, out
///
/// The dataset comes either from CSV files or from the generator, never both.
struct RunConfig {
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;
  std::optional<std::filesystem::path> shifted_test_csv;
  double train_frac = 0.5;
  GeneratorConfig generator;
  bool generator_configured = false;
  DemandShift shift{1.3, 1.0};
  bench::ComparisonConfig comparison;
  std::filesystem::path out_dir = "out";

  bool uses_csv() const { return train_csv.has_value(); }
  void validate() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

/// Settings used by `--smoke`: small PPO budget, fewer seeds.
void apply_smoke_budget(RunConfig& config);

}  // namespace battbench
