#include "battbench/battery_env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "battbench/errors.hpp"

namespace battbench {

namespace {

constexpr double kLatticeTol = 1e-9;
constexpr double kActionTol = 1e-12;

}  // namespace

void BatteryParams::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, "battery: " + m); };
  if (!(capacity_kwh > 0.0) || !std::isfinite(capacity_kwh)) fail("capacity must be positive");
  if (!(soc_min >= 0.0 && soc_min < soc_max && soc_max <= 1.0)) fail("need 0 <= soc_min < soc_max <= 1");
  if (!(step_hours > 0.0)) fail("step_hours must be positive");
  if (disabled()) return;
  if (!(a_max > 0.0 && a_max <= soc_max - soc_min + kLatticeTol)) fail("need 0 < a_max <= soc_max - soc_min");
  const double steps = (soc_max - soc_min) / a_max;
  if (std::abs(steps - std::round(steps)) > kLatticeTol * std::max(1.0, steps)) {
    fail("soc_max - soc_min must be a whole multiple of a_max");
  }
}

int BatteryParams::lattice_levels() const {
  if (disabled()) return 1;
  return static_cast<int>(std::lround((soc_max - soc_min) / a_max)) + 1;
}

bool BatteryParams::on_lattice(double soc) const {
  if (!std::isfinite(soc) || soc < soc_min - kLatticeTol || soc > soc_max + kLatticeTol) return false;
  if (disabled()) return true;
  const double k = (soc - soc_min) / a_max;
  return std::abs(k - std::round(k)) * a_max <= kLatticeTol;
}

int BatteryParams::lattice_level(double soc) const {
  if (!on_lattice(soc)) {
    std::ostringstream msg;
    msg << "SOC " << soc << " is not on the lattice soc_min + k * a_max";
    throw Error(ErrorKind::Alignment, msg.str());
  }
  if (disabled()) return 0;
  return static_cast<int>(std::lround((soc - soc_min) / a_max));
}

double BatteryParams::snap(double soc) const {
  if (disabled() || !on_lattice(soc)) return soc;
  return lattice_soc(static_cast<int>(std::lround((soc - soc_min) / a_max)));
}

double BatteryParams::default_soc0() const {
  if (disabled()) return 0.5 * (soc_min + soc_max);
  return lattice_soc((lattice_levels() - 1) / 2);
}

EnvState observe(const ExogenousSeries& series, std::size_t t, double soc) {
  if (t >= series.size()) {
    throw Error(ErrorKind::SeriesExhausted,
                "step index " + std::to_string(t) + " beyond series of length " + std::to_string(series.size()));
  }
  return EnvState{soc, series.prices[t], series.demands[t], series.hours[t], series.weekend[t], t};
}

StepOutcome step(const EnvState& state, Action action, const BatteryParams& params,
                 const ExogenousSeries& series) {
  if (state.t >= series.size()) {
    throw Error(ErrorKind::SeriesExhausted, "series exhausted at t=" + std::to_string(state.t));
  }
  if (!std::isfinite(action.a) || !std::isfinite(state.soc) || !std::isfinite(state.price) ||
      !std::isfinite(state.demand)) {
    throw Error(ErrorKind::InvalidInput, "non-finite state or action");
  }
  if (state.soc < params.soc_min - kLatticeTol || state.soc > params.soc_max + kLatticeTol) {
    throw Error(ErrorKind::InvalidInput, "state SOC outside operating band");
  }

  double a = std::clamp(action.a, params.soc_min - state.soc, params.soc_max - state.soc);
  a = std::clamp(a, -params.a_max, params.a_max);
  const double next_soc = params.snap(state.soc + a);
  // Charge the energy that actually moved after snapping.
  const double effective_a = next_soc - state.soc;

  StepOutcome out;
  out.effective_a = effective_a;
  out.grid_energy = state.demand + effective_a * params.capacity_kwh;
  out.reward = -(state.price * out.grid_energy);
  const std::size_t next_t = state.t + 1;
  if (next_t < series.size()) {
    out.next_state = observe(series, next_t, next_soc);
  } else {
    out.next_state = state;
    out.next_state.soc = next_soc;
    out.next_state.t = next_t;
    out.terminal = true;
  }
  return out;
}

std::vector<double> Trajectory::effective_actions() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.effective_a);
  return out;
}

Trajectory rollout(const Policy& policy, const ExogenousSeries& series, const BatteryParams& params,
                   double soc0) {
  if (series.size() == 0) throw Error(ErrorKind::Size, "rollout on empty series");
  params.lattice_level(soc0);
  Trajectory traj;
  traj.steps.reserve(series.size());
  EnvState state = observe(series, 0, soc0);
  for (std::size_t t = 0; t < series.size(); ++t) {
    const Action action = policy(state);
    if (!std::isfinite(action.a) || std::abs(action.a) > params.a_max + kActionTol) {
      throw Error(ErrorKind::InvalidAction, "policy emitted |a| > a_max at t=" + std::to_string(t));
    }
    const StepOutcome out = step(state, action, params, series);
    traj.steps.push_back(Transition{state, action, out.effective_a, out.reward});
    traj.total_cost -= out.reward;
    state = out.next_state;
  }
  traj.soc_final = state.soc;
  return traj;
}

Trajectory replay(const std::vector<double>& actions, const ExogenousSeries& series,
                  const BatteryParams& params, double soc0) {
  if (actions.size() != series.size()) {
    throw Error(ErrorKind::Size, "action log length does not match the series");
  }
  std::size_t i = 0;
  return rollout([&](const EnvState&) { return Action{actions[i++]}; }, series, params, soc0);
}

double no_bms_cost(const ExogenousSeries& series) {
  if (series.size() == 0) throw Error(ErrorKind::Size, "no_bms_cost on empty series");
  double total = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) total += series.prices[t] * series.demands[t];
  return total;
}

}  // namespace battbench
