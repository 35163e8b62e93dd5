#include "battbench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "battbench/errors.hpp"

namespace battbench::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Runs a policy, timing each decision separately.
ControllerResult timed_rollout(const std::string& name, const Policy& policy, const ExogenousSeries& test,
                               const BatteryParams& params, double soc0) {
  std::vector<double> decisions;
  decisions.reserve(test.size());
  const auto timed = [&](const EnvState& s) {
    const auto t0 = Clock::now();
    const Action a = policy(s);
    decisions.push_back(seconds_since(t0));
    return a;
  };
  const auto t0 = Clock::now();
  const Trajectory traj = rollout(timed, test, params, soc0);
  ControllerResult r;
  r.name = name;
  r.testing_time_s = seconds_since(t0);
  r.median_decision_s = median(decisions);
  r.total_cost = traj.total_cost;
  r.per_seed_costs = {traj.total_cost};
  r.action_logs = {traj.effective_actions()};
  return r;
}

}  // namespace

BaselinePolicy BaselinePolicy::from(const ExogenousSeries& train) {
  if (train.size() == 0) throw Error(ErrorKind::Size, "baseline needs a non-empty training series");
  return BaselinePolicy{train.prices.mean()};
}

Action baseline_act(const EnvState& state, const BaselinePolicy& policy, const BatteryParams& params) {
  constexpr double tol = 1e-9;
  if (state.price > policy.mean_train_price) {
    return Action{state.soc > params.soc_min + tol ? -params.a_max : 0.0};
  }
  return Action{state.soc < params.soc_max - tol ? params.a_max : 0.0};
}

double optimality_gap(double cost, double gt_cost) {
  if (!(gt_cost > 0.0)) {
    throw Error(ErrorKind::Domain, "optimality gap needs a positive ground-truth cost");
  }
  return (cost - gt_cost) / gt_cost;
}

double gap_percent_2dp(double cost, double gt_cost) {
  return std::round(optimality_gap(cost, gt_cost) * 1e4) / 1e2;
}

ConfidenceInterval confidence_interval(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw Error(ErrorKind::Size, "confidence interval needs at least 2 values");
  // Sorted summation makes the result independent of input order.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.975);
  return ConfidenceInterval{mean, t * sd / std::sqrt(static_cast<double>(n))};
}

const ControllerResult& EvalReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw Error(ErrorKind::InvalidInput, "report has no row '" + name + "'");
}

TrainedControllers train_controllers(const ExogenousSeries& train, const ComparisonConfig& config) {
  config.battery.validate();
  TrainedControllers out;
  out.forecaster = fit(train, config.forecaster);
  out.baseline = BaselinePolicy::from(train);
  for (std::uint64_t seed : config.seeds) {
    ppo::PpoConfig pc = config.ppo;
    pc.seed = seed;
    ppo::TrainResult tr = ppo::train(train, config.battery, pc);
    out.agents.push_back(std::move(tr.agent));
    out.curves.push_back(std::move(tr.curve));
    out.rl_env_steps.push_back(tr.env_steps);
  }
  return out;
}

EvalReport evaluate(const TrainedControllers& trained, const ExogenousSeries& train, const ExogenousSeries& test,
                    const ComparisonConfig& config, const std::string& label) {
  const auto& params = config.battery;
  const double soc0 = config.initial_soc();
  params.lattice_level(soc0);
  if (test.size() <= static_cast<std::size_t>(config.horizon)) {
    throw Error(ErrorKind::Size, "test series must be longer than the MPC horizon");
  }

  EvalReport report;
  report.label = label;
  report.train_rows = train.size();
  report.test_rows = test.size();
  report.test_start = format_timestamp(test.timestamps.front());
  report.test_end = format_timestamp(test.timestamps.back());
  report.horizon = config.horizon;
  report.soc0 = soc0;
  report.seeds = config.seeds;
  report.forecaster = trained.forecaster.kind;
  report.forecast = forecast_error(trained.forecaster, test, config.horizon, &train);

  // Ground truth first: every gap is measured against it.
  ControllerResult gt;
  {
    gt.name = kGroundTruth;
    const auto t0 = Clock::now();
    const GroundTruth truth = ground_truth(test, params, soc0);
    gt.testing_time_s = seconds_since(t0);
    gt.total_cost = truth.total_cost;
    gt.per_seed_costs = {truth.total_cost};
    gt.action_logs = {truth.actions};
  }

  ControllerResult rl;
  rl.name = kRl;
  {
    std::vector<double> decisions;
    for (std::size_t i = 0; i < trained.agents.size(); ++i) {
      const auto& agent = trained.agents[i];
      const auto policy = ppo::greedy_policy(agent, params);
      ControllerResult one = timed_rollout(kRl, policy, test, params, soc0);
      rl.per_seed_costs.push_back(one.total_cost);
      rl.action_logs.push_back(std::move(one.action_logs.front()));
      rl.testing_time_s += one.testing_time_s / trained.agents.size();
      decisions.push_back(one.median_decision_s);
      rl.train_samples = std::max(rl.train_samples, trained.rl_env_steps[i]);
    }
    if (rl.per_seed_costs.size() >= 2) {
      const auto ci = confidence_interval(rl.per_seed_costs);
      rl.total_cost = ci.mean;
      rl.ci_half_width = ci.half_width;
    } else if (!rl.per_seed_costs.empty()) {
      rl.total_cost = rl.per_seed_costs.front();
    }
    rl.median_decision_s = median(decisions);
  }

  auto mpc_row = [&](const std::string& name, const ForecastProvider& provider, long samples) {
    const auto t0 = Clock::now();
    RecedingResult run = receding_horizon_run(test, provider, params, config.horizon, soc0);
    ControllerResult r;
    r.name = name;
    r.testing_time_s = seconds_since(t0);
    r.median_decision_s = median(run.decision_seconds);
    r.total_cost = run.total_cost;
    r.per_seed_costs = {run.total_cost};
    r.action_logs = {run.trajectory.effective_actions()};
    r.train_samples = samples;
    return r;
  };
  ControllerResult mpc = mpc_row(kMpc, model_provider(trained.forecaster, train, test),
                                 static_cast<long>(trained.forecaster.train_rows));
  ControllerResult mpc_exact = mpc_row(kMpcExact, oracle_provider(test), 0);

  const BaselinePolicy baseline = trained.baseline;
  ControllerResult base = timed_rollout(
      kBaseline, [&](const EnvState& s) { return baseline_act(s, baseline, params); }, test, params, soc0);
  base.train_samples = static_cast<long>(train.size());

  ControllerResult idle = timed_rollout(kNoBms, [](const EnvState&) { return Action{0.0}; }, test, params, soc0);

  report.rows = {std::move(rl), std::move(mpc), std::move(mpc_exact), std::move(base), std::move(gt), std::move(idle)};
  const double gt_cost = report.row(kGroundTruth).total_cost;
  for (auto& r : report.rows) r.optimality_gap = optimality_gap(r.total_cost, gt_cost);
  return report;
}

EvalReport run_comparison(const ExogenousSeries& train, const ExogenousSeries& test, const ComparisonConfig& config) {
  const TrainedControllers trained = train_controllers(train, config);
  return evaluate(trained, train, test, config);
}

RobustnessReport run_robustness(const TrainedControllers& trained, const ExogenousSeries& train,
                                const ExogenousSeries& test, const ExogenousSeries& shifted_test,
                                const ComparisonConfig& config) {
  RobustnessReport out;
  out.unshifted = evaluate(trained, train, test, config, "unshifted");
  out.shifted = evaluate(trained, train, shifted_test, config, "shifted");
  for (const auto& r : out.shifted.rows) {
    out.gap_delta[r.name] = r.optimality_gap - out.unshifted.row(r.name).optimality_gap;
  }
  return out;
}

RobustnessReport run_robustness(const ExogenousSeries& train, const ExogenousSeries& test,
                                const ExogenousSeries& shifted_test, const ComparisonConfig& config) {
  return run_robustness(train_controllers(train, config), train, test, shifted_test, config);
}

}  // namespace battbench::bench
