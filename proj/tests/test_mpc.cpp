#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "battbench/errors.hpp"
#include "battbench/mpc.hpp"
#include "battbench/rng.hpp"
#include "test_support.hpp"

using namespace battbench;
using battbench::testing::series_of;

namespace {

HorizonProblem problem_of(const std::vector<double>& prices, const std::vector<double>& demands, double soc0,
                          BatteryParams params = {}) {
  HorizonProblem p;
  p.prices_hat = Eigen::Map<const Eigen::VectorXd>(prices.data(), prices.size());
  p.demands_hat = Eigen::Map<const Eigen::VectorXd>(demands.data(), demands.size());
  p.soc0 = soc0;
  p.params = params;
  return p;
}

struct BruteForce {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<int> moves;  // -1, 0, +1
};

// Enumerates all 3^(T+1) move sequences in lexicographic order of the
// preference idle < discharge < charge and keeps the first strict improvement.
BruteForce brute_force(const HorizonProblem& p) {
  const int steps = static_cast<int>(p.prices_hat.size());
  const int pref[3] = {0, -1, 1};
  BruteForce best;
  std::vector<int> digits(steps, 0);
  const int lo = 0;
  const int hi = p.params.lattice_levels() - 1;
  const int start = p.params.lattice_level(p.soc0);
  while (true) {
    int level = start;
    bool feasible = true;
    double cost = 0.0;
    for (int k = 0; k < steps && feasible; ++k) {
      const int m = pref[digits[k]];
      level += m;
      if (level < lo || level > hi) feasible = false;
      cost += p.prices_hat[k] * (p.params.capacity_kwh * m * p.params.a_max + p.demands_hat[k]);
    }
    const bool better =
        std::isinf(best.cost) || cost < best.cost - 1e-9 * std::max(1.0, std::abs(best.cost));
    if (feasible && better) {
      best.cost = cost;
      best.moves.clear();
      for (int d : digits) best.moves.push_back(pref[d]);
    }
    int i = steps - 1;
    while (i >= 0 && digits[i] == 2) digits[i--] = 0;
    if (i < 0) break;
    ++digits[i];
  }
  return best;
}

ExogenousSeries month(std::uint64_t seed, int days = 30) {
  GeneratorConfig g;
  g.days = days;
  g.seed = seed;
  return generate(g);
}

}  // namespace

TEST_CASE("worked examples") {
  BatteryParams unit;
  unit.capacity_kwh = 1.0;
  unit.soc_min = 0.0;
  unit.soc_max = 1.0;
  // Exports are paid, so with no terminal SOC value a half-full battery is
  // sold off in both steps: 1 * -0.1 + 2 * -0.1 = -0.3.
  SUBCASE("rising price from half full") {
    const auto plan = solve_horizon(problem_of({1, 2}, {0, 0}, 0.5, unit));
    CHECK(plan.actions[0] == doctest::Approx(-0.1));
    CHECK(plan.actions[1] == doctest::Approx(-0.1));
    CHECK(plan.predicted_cost == doctest::Approx(-0.3).epsilon(1e-12));
  }
  SUBCASE("rising price from empty: buy low, sell high") {
    const auto plan = solve_horizon(problem_of({1, 2}, {0, 0}, 0.0, unit));
    CHECK(plan.actions[0] == doctest::Approx(0.1));
    CHECK(plan.actions[1] == doctest::Approx(-0.1));
    CHECK(plan.predicted_cost == doctest::Approx(-0.1).epsilon(1e-12));
  }
  SUBCASE("falling price from full sells in both steps") {
    const auto plan = solve_horizon(problem_of({2, 1}, {0, 0}, 1.0, unit));
    CHECK(plan.actions[0] == doctest::Approx(-0.1));
    CHECK(plan.actions[1] == doctest::Approx(-0.1));
    CHECK(plan.predicted_cost == doctest::Approx(-0.3).epsilon(1e-12));
  }
  SUBCASE("falling price from empty buys the cheap hour only") {
    const auto plan = solve_horizon(problem_of({2, 1}, {0, 0}, 0.0, unit));
    CHECK(plan.actions[0] == 0.0);
    CHECK(plan.actions[1] == 0.0);
    CHECK(plan.predicted_cost == 0.0);
  }
  SUBCASE("demand adds a constant") {
    const auto plan = solve_horizon(problem_of({1, 2}, {5, 5}, 0.0, unit));
    CHECK(plan.actions[0] == doctest::Approx(0.1));
    CHECK(plan.actions[1] == doctest::Approx(-0.1));
    CHECK(plan.predicted_cost == doctest::Approx(-0.1 + 15.0).epsilon(1e-12));
  }
  SUBCASE("flat price from an empty battery stays idle") {
    const auto plan = solve_horizon(problem_of(std::vector<double>(10, 0.3), std::vector<double>(10, 0.0), 0.0, unit));
    CHECK((plan.actions.array() == 0.0).all());
    CHECK(plan.predicted_cost == 0.0);
  }
}

TEST_CASE("exact solver agrees with brute force on random instances") {
  Rng rng(2024);
  int instances = 0;
  for (int T = 0; T <= 9; ++T) {
    for (int rep = 0; rep < 12; ++rep) {
      BatteryParams params;
      params.capacity_kwh = 1.0 + 19.0 * rng.uniform();
      std::vector<double> prices(T + 1), demands(T + 1);
      for (int k = 0; k <= T; ++k) {
        // Coarse prices make exact ties common.
        prices[k] = rep % 3 == 0 ? static_cast<double>(rng.below(4)) * 0.05 : 0.3 * rng.uniform();
        demands[k] = 5.0 * rng.uniform();
      }
      const double soc0 = params.lattice_soc(static_cast<int>(rng.below(params.lattice_levels())));
      const auto prob = problem_of(prices, demands, soc0, params);
      const auto plan = solve_horizon(prob);
      const auto oracle = brute_force(prob);
      CHECK(plan.predicted_cost == doctest::Approx(oracle.cost).epsilon(1e-9));
      for (int k = 0; k <= T; ++k) CHECK(plan.actions[k] == doctest::Approx(oracle.moves[k] * params.a_max));
      ++instances;
    }
  }
  CHECK(instances >= 100);
}

TEST_CASE("property: plans are feasible and consistent") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + static_cast<int>(rng.below(48));
    std::vector<double> prices(T + 1), demands(T + 1);
    for (int k = 0; k <= T; ++k) {
      prices[k] = 0.4 * rng.uniform();
      demands[k] = 4.0 * rng.uniform();
    }
    const BatteryParams params;
    const double soc0 = params.lattice_soc(static_cast<int>(rng.below(params.lattice_levels())));
    const auto prob = problem_of(prices, demands, soc0);
    const auto plan = solve_horizon(prob);
    REQUIRE(plan.soc_path.size() == T + 2);
    CHECK(plan.soc_path[0] == soc0);
    double cost = 0.0;
    for (int k = 0; k <= T; ++k) {
      CHECK(std::abs(plan.actions[k]) <= params.a_max + 1e-12);
      CHECK(plan.soc_path[k + 1] == doctest::Approx(plan.soc_path[k] + plan.actions[k]).epsilon(1e-12));
      CHECK(plan.soc_path[k + 1] >= params.soc_min - 1e-9);
      CHECK(plan.soc_path[k + 1] <= params.soc_max + 1e-9);
      cost += prices[k] * (params.capacity_kwh * plan.actions[k] + demands[k]);
    }
    CHECK(plan.predicted_cost == doctest::Approx(cost).epsilon(1e-9));

    // Positive price scaling leaves the argmin unchanged.
    auto scaled = prob;
    scaled.prices_hat *= 3.7;
    CHECK(solve_horizon(scaled).actions == plan.actions);
    // Demand is action independent.
    auto redemand = prob;
    redemand.demands_hat.setConstant(1.0);
    CHECK(solve_horizon(redemand).actions == plan.actions);

    // Random continuous feasible plans never beat the exact optimum.
    double soc = soc0, alt = 0.0;
    for (int k = 0; k <= T; ++k) {
      const double lo = std::max(-params.a_max, params.soc_min - soc);
      const double hi = std::min(params.a_max, params.soc_max - soc);
      const double a = lo + (hi - lo) * rng.uniform();
      soc += a;
      alt += prices[k] * (params.capacity_kwh * a + demands[k]);
    }
    CHECK(plan.predicted_cost <= alt + 1e-9);
  }
}

TEST_CASE("off-lattice start is rejected") {
  try {
    solve_horizon(problem_of({1, 2}, {0, 0}, 0.55));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Alignment);
  }
}

TEST_CASE("ground truth") {
  BatteryParams unit;
  unit.capacity_kwh = 1.0;
  unit.soc_min = 0.0;
  unit.soc_max = 1.0;
  CHECK(ground_truth(series_of({1, 2}, {0, 0}), unit, 0.0).total_cost == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(ground_truth(series_of({1, 2}, {0, 0}), unit, 0.5).total_cost == doctest::Approx(-0.3).epsilon(1e-12));

  const auto s = month(3);
  BatteryParams off;
  off.a_max = 0.0;
  CHECK(ground_truth(s, off, 0.5).total_cost == doctest::Approx(no_bms_cost(s)).epsilon(1e-12));

  const BatteryParams params;
  const auto gt = ground_truth(s, params, params.default_soc0());
  CHECK(gt.actions.size() == s.size());
  CHECK(replay(gt.actions, s, params, params.default_soc0()).total_cost == gt.total_cost);
  CHECK(gt.total_cost <= no_bms_cost(s));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto traj = rollout(
        [&](const EnvState&) { return Action{(static_cast<int>(rng.below(3)) - 1) * params.a_max}; }, s, params,
        params.default_soc0());
    CHECK(gt.total_cost <= traj.total_cost + 1e-9);
  }
}

TEST_CASE("receding horizon with full-length oracle equals ground truth") {
  const auto s = month(4, 3);
  const BatteryParams params;
  const double soc0 = params.default_soc0();
  const auto run = receding_horizon_run(s, oracle_provider(s), params, static_cast<int>(s.size()), soc0);
  const auto gt = ground_truth(s, params, soc0);
  CHECK(run.total_cost == doctest::Approx(gt.total_cost).epsilon(1e-12));
  const auto taken = run.trajectory.effective_actions();
  REQUIRE(taken.size() == gt.actions.size());
  for (std::size_t i = 0; i < taken.size(); ++i) CHECK(taken[i] == doctest::Approx(gt.actions[i]).epsilon(1e-12));
  CHECK(run.decision_seconds.size() == s.size());
}

TEST_CASE("receding horizon on constant prices") {
  const double price = 0.2;
  const auto s = battbench::testing::constant_series(96, price, 2.0);
  const BatteryParams params;
  SUBCASE("from the lower bound nothing is gained, all idle") {
    const auto run = receding_horizon_run(s, oracle_provider(s), params, 24, params.soc_min);
    for (double a : run.trajectory.effective_actions()) CHECK(a == 0.0);
    CHECK(run.total_cost == doctest::Approx(no_bms_cost(s)).epsilon(1e-12));
  }
  SUBCASE("cost differs from no-BMS by the value of the SOC change") {
    const auto run = receding_horizon_run(s, oracle_provider(s), params, 24, 0.5);
    const double expected = no_bms_cost(s) + price * params.capacity_kwh * (run.trajectory.soc_final - 0.5);
    CHECK(run.total_cost == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("oracle receding horizon with T = 24 is within 1% of ground truth") {
  const auto s = month(7);
  const BatteryParams params;
  const double soc0 = params.default_soc0();
  const auto run = receding_horizon_run(s, oracle_provider(s), params, 24, soc0);
  const auto gt = ground_truth(s, params, soc0);
  CHECK(run.total_cost >= gt.total_cost - 1e-9);
  CHECK((run.total_cost - gt.total_cost) / gt.total_cost <= 0.01);
}

TEST_CASE("forecast-driven receding horizon uses only past data") {
  GeneratorConfig g;
  g.days = 20;
  const auto [train, test] = split(generate(g), 0.5);
  const auto model = fit(train, ForecasterKind::ArLinear);
  const BatteryParams params;
  const auto provider = model_provider(model, train, test);
  const auto f = provider(5, 24);
  CHECK(f.prices_hat[0] == test.prices[5]);
  CHECK(f.demands_hat[0] == test.demands[5]);
  const auto run = receding_horizon_run(test, provider, params, 24, params.default_soc0());
  CHECK(run.trajectory.steps.size() == test.size());
  CHECK(run.total_cost >= ground_truth(test, params, params.default_soc0()).total_cost - 1e-9);
}

TEST_CASE("plan csv") {
  const auto prob = problem_of({1, 2}, {0.5, 0.5}, 0.5);
  std::ostringstream out;
  write_plan_csv(prob, solve_horizon(prob), 3, out);
  const std::string text = out.str();
  CHECK(text.rfind("t,action,soc,price_hat,demand_hat\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("demand shift does not change MPC decisions") {
  // Exports are paid at the import price, so the plan depends on prices only.
  GeneratorConfig g;
  g.days = 20;
  const auto [train, test] = split(generate(g), 0.5);
  g.shift = DemandShift{1.3, 1.0};
  const auto shifted = split(generate(g), 0.5).second;
  const auto model = fit(train, ForecasterKind::ArLinear);
  const BatteryParams params;
  const double soc0 = params.default_soc0();
  const auto a = receding_horizon_run(test, model_provider(model, train, test), params, 24, soc0);
  const auto b = receding_horizon_run(shifted, model_provider(model, train, shifted), params, 24, soc0);
  CHECK(a.trajectory.effective_actions() == b.trajectory.effective_actions());
  const double regret_a = a.total_cost - ground_truth(test, params, soc0).total_cost;
  const double regret_b = b.total_cost - ground_truth(shifted, params, soc0).total_cost;
  CHECK(regret_a == doctest::Approx(regret_b).epsilon(1e-9));
}
