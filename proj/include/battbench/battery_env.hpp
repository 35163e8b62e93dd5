#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "battbench/series.hpp"

namespace battbench {

/// Battery model. SOC and the action `a` are fractions of capacity; one step
/// moves a * capacity_kwh of energy.
///
/// The reachable SOC values form the lattice {soc_min + k * a_max}; the exact
/// MPC solver relies on soc_max - soc_min being a whole number of steps and on
/// the initial SOC lying on the lattice. a_max == 0 is accepted as a disabled
/// battery whose lattice is the single point soc0.
struct BatteryParams {
  double capacity_kwh = 10.0;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double a_max = 0.1;
  double step_hours = 1.0;

  void validate() const;

  bool disabled() const { return a_max == 0.0; }
  int lattice_levels() const;
  double lattice_soc(int level) const { return soc_min + level * a_max; }
  bool on_lattice(double soc) const;
  /// Level of an on-lattice SOC; throws Error{Alignment} otherwise.
  int lattice_level(double soc) const;
  /// Returns the lattice point when `soc` is within rounding noise of one.
  double snap(double soc) const;
  /// Midpoint of [soc_min, soc_max] rounded down to the lattice.
  double default_soc0() const;
};

struct EnvState {
  double soc = 0.0;
  double price = 0.0;
  double demand = 0.0;
  int hour = 0;
  bool is_weekend = false;
  std::size_t t = 0;
};

struct Action {
  double a = 0.0;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  double effective_a = 0.0;
  double grid_energy = 0.0;  // kWh bought; negative is export
  bool terminal = false;     // the step consumed the last row of the series
};

/// State at row t of the series with the given SOC.
EnvState observe(const ExogenousSeries& series, std::size_t t, double soc);

/// One transition. The requested action is clamped into the SOC band and the
/// rate box; the reward is charged on the clamped action. Stepping from the
/// last row is allowed and yields a terminal outcome whose next state repeats
/// the final observation.
StepOutcome step(const EnvState& state, Action action, const BatteryParams& params,
                 const ExogenousSeries& series);

using Policy = std::function<Action(const EnvState&)>;

struct Transition {
  EnvState state;
  Action action;
  double effective_a = 0.0;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<Transition> steps;
  double total_cost = 0.0;
  double soc_final = 0.0;

  std::vector<double> effective_actions() const;
};

/// Runs `policy` over every row of the series, starting at soc0.
Trajectory rollout(const Policy& policy, const ExogenousSeries& series, const BatteryParams& params,
                   double soc0);

/// Replays a fixed action log; the log must cover the whole series.
Trajectory replay(const std::vector<double>& actions, const ExogenousSeries& series,
                  const BatteryParams& params, double soc0);

/// Cost with the battery idle, sum of price * demand.
double no_bms_cost(const ExogenousSeries& series);

}  // namespace battbench
