#include "battbench/mpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>

#include "battbench/errors.hpp"
#include "battbench/text_io.hpp"

namespace battbench {

namespace {

// Preference order for ties.
constexpr int kMoves[3] = {0, -1, +1};

bool strictly_better(double candidate, double incumbent) {
  if (std::isinf(incumbent)) return candidate < incumbent;
  return candidate < incumbent - 1e-12 * std::max(1.0, std::abs(incumbent));
}

}  // namespace

HorizonPlan solve_horizon(const HorizonProblem& problem) {
  const auto& params = problem.params;
  params.validate();
  const int steps = static_cast<int>(problem.prices_hat.size());
  if (steps < 1 || problem.demands_hat.size() != steps) {
    throw Error(ErrorKind::Shape, "forecast arrays must both have length T + 1 >= 1");
  }
  if (!problem.prices_hat.allFinite() || !problem.demands_hat.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "non-finite forecast");
  }
  const int start = params.lattice_level(problem.soc0);
  const int levels = params.lattice_levels();
  const double energy = params.capacity_kwh * params.a_max;

  // choice(k, j): move taken at step k from level j; value: cost-to-go.
  Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic> choice(steps, levels);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(levels);
  Eigen::VectorXd next(levels);
  for (int k = steps - 1; k >= 0; --k) {
    const double unit = problem.prices_hat[k] * energy;
    for (int j = 0; j < levels; ++j) {
      double best = std::numeric_limits<double>::infinity();
      signed char best_move = 0;
      for (int move : kMoves) {
        const int to = j + move;
        if (to < 0 || to >= levels || (move != 0 && params.disabled())) continue;
        const double q = unit * move + value[to];
        if (strictly_better(q, best)) {
          best = q;
          best_move = static_cast<signed char>(move);
        }
      }
      next[j] = best;
      choice(k, j) = best_move;
    }
    value.swap(next);
  }

  HorizonPlan plan;
  plan.actions.resize(steps);
  plan.soc_path.resize(steps + 1);
  int level = start;
  plan.soc_path[0] = problem.soc0;
  for (int k = 0; k < steps; ++k) {
    const int move = choice(k, level);
    level += move;
    plan.actions[k] = move * params.a_max;
    plan.soc_path[k + 1] = params.disabled() ? problem.soc0 : params.lattice_soc(level);
    plan.predicted_cost +=
        problem.prices_hat[k] * (params.capacity_kwh * plan.actions[k] + problem.demands_hat[k]);
  }
  return plan;
}

ForecastProvider oracle_provider(const ExogenousSeries& series) {
  return [&series](std::size_t t, int horizon) { return oracle_horizon(series, t, horizon); };
}

ForecastProvider model_provider(const ForecasterModel& model, const ExogenousSeries& context,
                                const ExogenousSeries& series) {
  auto combined = std::make_shared<const ExogenousSeries>(concat(context, series));
  const std::size_t offset = context.size();
  return [model, combined, offset](std::size_t t, int horizon) {
    auto fc = predict_horizon(model, *combined, offset + t, horizon);
    fc.origin_t = t;
    return fc;
  };
}

RecedingResult receding_horizon_run(const ExogenousSeries& series, const ForecastProvider& forecasts,
                                    const BatteryParams& params, int horizon, double soc0) {
  if (horizon < 1) throw Error(ErrorKind::Validation, "MPC horizon must be >= 1");
  params.validate();
  params.lattice_level(soc0);
  const std::size_t n = series.size();
  RecedingResult result;
  result.decision_seconds.reserve(n);
  const auto policy = [&](const EnvState& state) {
    const auto t0 = std::chrono::steady_clock::now();
    const int h = static_cast<int>(std::min<std::size_t>(horizon, n - 1 - state.t));
    Action action{0.0};
    if (h >= 1) {
      ForecastHorizon fc = forecasts(state.t, h);
      // Entry 0 is always the observation at t.
      fc.prices_hat[0] = state.price;
      fc.demands_hat[0] = state.demand;
      const HorizonPlan plan =
          solve_horizon(HorizonProblem{std::move(fc.prices_hat), std::move(fc.demands_hat), state.soc, params});
      action.a = plan.actions[0];
    } else {
      const HorizonPlan plan = solve_horizon(HorizonProblem{
          Eigen::VectorXd::Constant(1, state.price), Eigen::VectorXd::Constant(1, state.demand), state.soc, params});
      action.a = plan.actions[0];
    }
    result.decision_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return action;
  };
  result.trajectory = rollout(policy, series, params, soc0);
  result.total_cost = result.trajectory.total_cost;
  return result;
}

GroundTruth ground_truth(const ExogenousSeries& series, const BatteryParams& params, double soc0) {
  const HorizonPlan plan = solve_horizon(HorizonProblem{series.prices, series.demands, soc0, params});
  GroundTruth gt;
  gt.actions.assign(plan.actions.data(), plan.actions.data() + plan.actions.size());
  gt.total_cost = replay(gt.actions, series, params, soc0).total_cost;
  return gt;
}

void write_plan_csv(const HorizonProblem& problem, const HorizonPlan& plan, std::size_t origin,
                    std::ostream& out) {
  using text_io::format_double;
  out << "t,action,soc,price_hat,demand_hat\n";
  for (Eigen::Index k = 0; k < plan.actions.size(); ++k) {
    out << origin + k << ',' << format_double(plan.actions[k]) << ',' << format_double(plan.soc_path[k]) << ','
        << format_double(problem.prices_hat[k]) << ',' << format_double(problem.demands_hat[k]) << '\n';
  }
}

}  // namespace battbench
