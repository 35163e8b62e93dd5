#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "battbench/battery_env.hpp"
#include "battbench/forecast.hpp"

namespace battbench {

/// min  sum_k price_k * (E * a_k + demand_k),  k = 0..T
/// s.t. soc_{k+1} = soc_k + a_k,  soc_min <= soc_{k+1} <= soc_max,  |a_k| <= a_max
struct HorizonProblem {
  Eigen::VectorXd prices_hat;   // length T + 1
  Eigen::VectorXd demands_hat;  // length T + 1
  double soc0 = 0.5;
  BatteryParams params;

  int horizon() const { return static_cast<int>(prices_hat.size()) - 1; }
};

struct HorizonPlan {
  Eigen::VectorXd actions;   // length T + 1
  Eigen::VectorXd soc_path;  // length T + 2
  double predicted_cost = 0.0;
};

/// Exact solver. The constraint matrix of the problem is an interval matrix,
/// so with soc0 and the bounds on the lattice {soc_min + j * a_max} some
/// optimal vertex uses only a in {-a_max, 0, +a_max}; a backward dynamic
/// program over the lattice finds it in O(T * levels). Among optimal plans the
/// lexicographically first under idle < discharge < charge is returned.
HorizonPlan solve_horizon(const HorizonProblem& problem);

/// Price / demand forecasts for origin t with horizon T (entry 0 observed).
using ForecastProvider = std::function<ForecastHorizon(std::size_t t, int horizon)>;

/// Perfect forecasts of `series`.
ForecastProvider oracle_provider(const ExogenousSeries& series);

/// Forecasts of `series` from a fitted model; `context` (may be empty) is
/// history that immediately precedes `series`.
ForecastProvider model_provider(const ForecasterModel& model, const ExogenousSeries& context,
                                const ExogenousSeries& series);

struct RecedingResult {
  Trajectory trajectory;
  double total_cost = 0.0;
  std::vector<double> decision_seconds;  // forecast + solve, per step
};

/// Re-plans at every step and applies the first action of each plan. The
/// horizon shrinks to the remaining rows near the end of the series.
RecedingResult receding_horizon_run(const ExogenousSeries& series, const ForecastProvider& forecasts,
                                    const BatteryParams& params, int horizon, double soc0);

struct GroundTruth {
  double total_cost = 0.0;  // realized by replaying the actions through the env
  std::vector<double> actions;
};

/// Single solve over the whole series with the true prices and demands.
GroundTruth ground_truth(const ExogenousSeries& series, const BatteryParams& params, double soc0);

/// `t,action,soc,price_hat,demand_hat`
void write_plan_csv(const HorizonProblem& problem, const HorizonPlan& plan, std::size_t origin,
                    std::ostream& out);

}  // namespace battbench
