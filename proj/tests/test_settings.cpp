#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "battbench/errors.hpp"
#include "battbench/settings.hpp"

using namespace battbench;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

ErrorKind kind_of_parse(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("empty config gives defaults") {
  const auto c = parse("");
  CHECK_FALSE(c.uses_csv());
  CHECK(c.train_frac == 0.5);
  CHECK(c.comparison.horizon == 24);
  CHECK(c.comparison.seeds.size() == 5);
  CHECK(c.comparison.ppo.total_env_steps == 3'000'000);
  CHECK(c.comparison.forecaster == ForecasterKind::ArLinear);
  CHECK(c.shift.demand_mean_scale == 1.3);
}

TEST_CASE("keys are read") {
  const auto c = parse(
      "[generator]\nseed = 11\ndays = 30\nstart = 2024-03-01T00:00:00\n"
      "[battery]\ncapacity_kwh = 13.5\nsoc0 = 0.3\n"
      "[mpc]\nhorizon = 12\n"
      "[forecast]\nkind = seasonal_naive\n"
      "[ppo]\nlr = 0.001\nhidden = 32, 16\nanneal_lr = false\n"
      "[run]\nseeds = 4,5\nout = results\n");
  CHECK(c.generator_configured);
  CHECK(c.generator.seed == 11);
  CHECK(c.generator.days == 30);
  CHECK(format_timestamp(c.generator.start) == "2024-03-01T00:00:00");
  CHECK(c.comparison.battery.capacity_kwh == 13.5);
  CHECK(c.comparison.initial_soc() == 0.3);
  CHECK(c.comparison.horizon == 12);
  CHECK(c.comparison.forecaster == ForecasterKind::SeasonalNaive);
  CHECK(c.comparison.ppo.lr == 0.001);
  CHECK(c.comparison.ppo.hidden == std::vector<int>{32, 16});
  CHECK_FALSE(c.comparison.ppo.anneal_lr);
  CHECK(c.comparison.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.out_dir == "results");
}

TEST_CASE("invalid configs") {
  CHECK(kind_of_parse("[battery]\nvoltage = 400\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[battery]\ncapacity_kwh = big\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[ppo]\nhidden = 8, x\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[data]\ntrain_csv = a.csv\n[generator]\nseed = 1\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[battery]\nsoc0 = 0.55\n") == ErrorKind::Alignment);
  CHECK(kind_of_parse("[ppo]\ngamma = 0.99\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[forecast]\nkind = lstm\n") == ErrorKind::Validation);
  CHECK(kind_of_parse("[battery\n") == ErrorKind::Parse);
}

TEST_CASE("smoke budget") {
  auto c = parse("");
  apply_smoke_budget(c);
  CHECK(c.comparison.ppo.total_env_steps <= 10'000);
  CHECK(c.comparison.seeds.size() == 2);
}
