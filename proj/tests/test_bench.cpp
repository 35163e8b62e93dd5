#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "battbench/bench.hpp"
#include "battbench/errors.hpp"
#include "battbench/report.hpp"
#include "test_support.hpp"

using namespace battbench;
using namespace battbench::bench;

namespace {

ComparisonConfig small_config() {
  ComparisonConfig c;
  c.ppo.total_env_steps = 168 * 12;
  c.ppo.rollout_steps = 168 * 4;
  c.ppo.epochs_per_update = 2;
  c.ppo.hidden = {8};
  c.seeds = {0, 1};
  return c;
}

std::pair<ExogenousSeries, ExogenousSeries> small_data(std::uint64_t seed = 7) {
  GeneratorConfig g;
  g.days = 20;
  g.seed = seed;
  return split(generate(g), 0.5);
}

}  // namespace

TEST_CASE("baseline rule") {
  const BaselinePolicy policy{0.10};
  const BatteryParams params;
  EnvState s;
  s.soc = 0.5;
  s.price = 0.12;
  CHECK(baseline_act(s, policy, params).a == -params.a_max);
  s.price = 0.08;
  s.soc = params.soc_max;
  CHECK(baseline_act(s, policy, params).a == 0.0);
  s.soc = 0.5;
  s.price = 0.10;
  CHECK(baseline_act(s, policy, params).a == params.a_max);
  s.price = 0.2;
  s.soc = params.soc_min;
  CHECK(baseline_act(s, policy, params).a == 0.0);

  const auto [train, test] = small_data();
  CHECK(BaselinePolicy::from(train).mean_train_price == train.prices.mean());
}

TEST_CASE("optimality gap") {
  CHECK(gap_percent_2dp(89650, 79268) == doctest::Approx(13.10));
  CHECK(gap_percent_2dp(85100, 79268) == doctest::Approx(7.36));
  CHECK(gap_percent_2dp(158977, 154981) == doctest::Approx(2.58));
  CHECK(optimality_gap(5.0, 5.0) == 0.0);
  try {
    optimality_gap(1.0, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
  CHECK_THROWS_AS(optimality_gap(1.0, -2.0), Error);
}

TEST_CASE("confidence interval") {
  const std::vector<double> ones{1, 1, 1, 1, 1};
  const auto a = confidence_interval(ones);
  CHECK(a.mean == 1.0);
  CHECK(a.half_width == 0.0);

  const std::vector<double> two{0, 2};
  const auto b = confidence_interval(two);
  CHECK(b.mean == 1.0);
  CHECK(b.half_width == doctest::Approx(12.706).epsilon(1e-4));

  const std::vector<double> five{3.0, 1.5, 2.25, 9.0, 0.125};
  // t(0.975, 4) = 2.776
  double mean = 0.0;
  for (double v : five) mean += v / 5.0;
  double ss = 0.0;
  for (double v : five) ss += (v - mean) * (v - mean);
  const auto c = confidence_interval(five);
  CHECK(c.mean == doctest::Approx(mean));
  CHECK(c.half_width == doctest::Approx(2.776 * std::sqrt(ss / 4.0) / std::sqrt(5.0)).epsilon(1e-3));

  auto perm = five;
  std::sort(perm.begin(), perm.end());
  do {
    const auto p = confidence_interval(perm);
    CHECK(p.mean == c.mean);
    CHECK(p.half_width == c.half_width);
  } while (std::next_permutation(perm.begin(), perm.end()));

  const std::vector<double> one{1.0};
  try {
    confidence_interval(one);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Size);
  }
}

TEST_CASE("comparison: rows, ordering, re-simulation") {
  const auto [train, test] = small_data();
  const auto cfg = small_config();
  const auto report = run_comparison(train, test, cfg);
  REQUIRE(report.rows.size() == 6);
  CHECK(report.rows[0].name == kRl);
  CHECK(report.rows[1].name == kMpc);
  CHECK(report.rows[2].name == kMpcExact);
  CHECK(report.rows[3].name == kBaseline);
  CHECK(report.rows[4].name == kGroundTruth);
  CHECK(report.rows[5].name == kNoBms);

  const double gt = report.row(kGroundTruth).total_cost;
  CHECK(report.row(kGroundTruth).optimality_gap == 0.0);
  for (const auto& row : report.rows) {
    for (double c : row.per_seed_costs) CHECK(gt <= c + 1e-9);
    CHECK(row.optimality_gap == doctest::Approx((row.total_cost - gt) / gt).epsilon(1e-12));
  }
  CHECK(report.row(kMpcExact).optimality_gap <= report.row(kMpc).optimality_gap + 1e-12);
  CHECK(report.row(kRl).per_seed_costs.size() == cfg.seeds.size());
  CHECK(report.row(kRl).ci_half_width.has_value());
  CHECK_FALSE(report.row(kMpc).ci_half_width.has_value());
  CHECK(report.row(kRl).train_samples <= cfg.ppo.total_env_steps);
  CHECK(report.row(kMpc).train_samples == static_cast<long>(train.size()));

  const double soc0 = cfg.initial_soc();
  for (const auto& row : report.rows) {
    REQUIRE(row.action_logs.size() == row.per_seed_costs.size());
    for (std::size_t k = 0; k < row.action_logs.size(); ++k) {
      CHECK(replay(row.action_logs[k], test, cfg.battery, soc0).total_cost == row.per_seed_costs[k]);
    }
  }
}

TEST_CASE("comparison is reproducible apart from timings") {
  const auto [train, test] = small_data(3);
  const auto cfg = small_config();
  const auto a = run_comparison(train, test, cfg);
  const auto b = run_comparison(train, test, cfg);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].per_seed_costs == b.rows[i].per_seed_costs);
    CHECK(a.rows[i].total_cost == b.rows[i].total_cost);
  }
}

TEST_CASE("flat prices leave little to gain") {
  const auto train = battbench::testing::constant_series(24 * 10, 0.15, 3.0);
  auto all = battbench::testing::constant_series(24 * 20, 0.15, 3.0);
  const auto test = all.slice(24 * 10, 24 * 10);
  const auto report = run_comparison(train, test, small_config());
  const double gt = report.row(kGroundTruth).total_cost;
  // Only the initial charge can be sold, and no controller can lose more
  // than one full swing of the battery.
  const BatteryParams params;
  CHECK(gt == doctest::Approx(no_bms_cost(test) - 0.15 * params.capacity_kwh * 0.4));
  const double swing = 0.15 * params.capacity_kwh * (params.soc_max - params.soc_min);
  for (const auto& row : report.rows) CHECK(row.total_cost - gt <= swing + 1e-9);
}

TEST_CASE("robustness: zero shift reproduces the unshifted report") {
  const auto [train, test] = small_data();
  const auto cfg = small_config();
  const auto r = run_robustness(train, test, test, cfg);
  for (std::size_t i = 0; i < r.unshifted.rows.size(); ++i) {
    CHECK(r.unshifted.rows[i].total_cost == r.shifted.rows[i].total_cost);
    CHECK(r.gap_delta.at(r.unshifted.rows[i].name) == 0.0);
  }
}

TEST_CASE("reports") {
  const auto [train, test] = small_data();
  const auto report = run_comparison(train, test, small_config());
  const auto j = nlohmann::json::parse(to_json(report));
  CHECK(j["schema"] == kReportSchema);
  REQUIRE(j["controllers"].size() == 6);
  const double gt = j["controllers"][4]["cost"].get<double>();
  for (const auto& c : j["controllers"]) {
    const double recomputed = 100.0 * (c["cost"].get<double>() - gt) / gt;
    CHECK(std::abs(recomputed - c["optimality_gap_pct"].get<double>()) <= 0.005);
  }
  CHECK(j["controllers"][0]["ci_half_width"].is_number());
  CHECK(j["controllers"][1]["ci_half_width"].is_null());
  CHECK(j["dataset"]["test_rows"] == test.size());

  std::ostringstream table, csv, log;
  write_table(report, table);
  write_summary_csv(report, csv);
  write_action_log_csv(report, log);
  CHECK(table.str().find("Ground truth") != std::string::npos);
  const std::string summary = csv.str();
  CHECK(summary.rfind("controller,cost,ci_half_width,gap_pct,testing_time_s,median_decision_s,data_used\n", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 7);
  CHECK(log.str().rfind("controller,seed_index,t,action\n", 0) == 0);

  const auto r = run_robustness(train, test, test, small_config());
  const auto jr = nlohmann::json::parse(to_json(r));
  CHECK(jr.contains("unshifted"));
  CHECK(jr.contains("shifted"));
  CHECK(jr.contains("gap_delta_pct"));
}
