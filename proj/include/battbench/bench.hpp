#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "battbench/battery_env.hpp"
#include "battbench/forecast.hpp"
#include "battbench/mpc.hpp"
#include "battbench/ppo.hpp"

namespace battbench::bench {

/// Threshold rule: discharge when the price is above the training mean,
/// otherwise charge, as long as the SOC band allows.
struct BaselinePolicy {
  double mean_train_price = 0.0;

  static BaselinePolicy from(const ExogenousSeries& train);
};

Action baseline_act(const EnvState& state, const BaselinePolicy& policy, const BatteryParams& params);

/// (cost - gt_cost) / gt_cost as a fraction; gt_cost must be positive.
double optimality_gap(double cost, double gt_cost);

/// Gap as a percentage rounded to two decimals, the way result tables print it.
double gap_percent_2dp(double cost, double gt_cost);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// Student-t 95% interval: mean +- t(0.975, n - 1) * s / sqrt(n).
ConfidenceInterval confidence_interval(std::span<const double> values);

inline const std::string kRl = "RL";
inline const std::string kMpc = "MPC";
inline const std::string kMpcExact = "MPC (exact model)";
inline const std::string kBaseline = "Baseline";
inline const std::string kGroundTruth = "Ground truth";
inline const std::string kNoBms = "No BMS";

struct ControllerResult {
  std::string name;
  double total_cost = 0.0;                 // mean over seeds for RL
  std::optional<double> ci_half_width;     // RL only
  double optimality_gap = 0.0;             // fraction
  double testing_time_s = 0.0;             // wall clock for the whole test pass (mean over seeds)
  double median_decision_s = 0.0;
  long train_samples = 0;
  std::vector<double> per_seed_costs;
  std::vector<std::vector<double>> action_logs;  // one per seed (or one)
};

struct EvalReport {
  std::string label;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::string test_start;
  std::string test_end;
  int horizon = 24;
  double soc0 = 0.0;
  std::vector<std::uint64_t> seeds;
  ForecasterKind forecaster = ForecasterKind::ArLinear;
  ForecastErrors forecast;
  std::vector<ControllerResult> rows;

  const ControllerResult& row(const std::string& name) const;
};

struct ComparisonConfig {
  BatteryParams battery;
  int horizon = 24;
  ForecasterKind forecaster = ForecasterKind::ArLinear;
  ppo::PpoConfig ppo;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::optional<double> soc0;

  double initial_soc() const { return soc0 ? *soc0 : battery.default_soc0(); }
};

/// Everything learned from the training split.
struct TrainedControllers {
  ForecasterModel forecaster;
  BaselinePolicy baseline;
  std::vector<ppo::Agent> agents;  // one per seed
  std::vector<std::vector<ppo::CurvePoint>> curves;
  std::vector<long> rl_env_steps;
};

/// Fits the forecaster and baseline and trains one PPO agent per seed.
TrainedControllers train_controllers(const ExogenousSeries& train, const ComparisonConfig& config);

/// Runs every controller over `test`. `train` supplies forecaster history.
EvalReport evaluate(const TrainedControllers& trained, const ExogenousSeries& train, const ExogenousSeries& test,
                    const ComparisonConfig& config, const std::string& label = "comparison");

EvalReport run_comparison(const ExogenousSeries& train, const ExogenousSeries& test, const ComparisonConfig& config);

struct RobustnessReport {
  EvalReport unshifted;
  EvalReport shifted;
  /// shifted gap - unshifted gap, per controller (fraction).
  std::map<std::string, double> gap_delta;
};

/// Evaluates controllers trained once on `train` against both test sets.
RobustnessReport run_robustness(const TrainedControllers& trained, const ExogenousSeries& train,
                                const ExogenousSeries& test, const ExogenousSeries& shifted_test,
                                const ComparisonConfig& config);
RobustnessReport run_robustness(const ExogenousSeries& train, const ExogenousSeries& test,
                                const ExogenousSeries& shifted_test, const ComparisonConfig& config);

}  // namespace battbench::bench
