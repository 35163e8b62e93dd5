#include "battbench/report.hpp"

#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "battbench/text_io.hpp"

namespace battbench::bench {

namespace {

nlohmann::ordered_json report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["label"] = report.label;
  j["dataset"] = {{"train_rows", report.train_rows},
                  {"test_rows", report.test_rows},
                  {"test_start", report.test_start},
                  {"test_end", report.test_end}};
  j["horizon"] = report.horizon;
  j["soc0"] = report.soc0;
  j["seeds"] = report.seeds;
  j["forecaster"] = {{"kind", to_string(report.forecaster)},
                     {"price_rmse", report.forecast.price_rmse_overall},
                     {"demand_rmse", report.forecast.demand_rmse_overall}};
  auto& rows = j["controllers"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["name"] = r.name;
    row["cost"] = r.total_cost;
    row["ci_half_width"] = r.ci_half_width ? nlohmann::ordered_json(*r.ci_half_width) : nlohmann::ordered_json();
    row["optimality_gap_pct"] = 100.0 * r.optimality_gap;
    row["data_used"] = r.train_samples;
    row["testing_time_s"] = r.testing_time_s;
    row["median_decision_s"] = r.median_decision_s;
    row["per_seed_costs"] = r.per_seed_costs;
    rows.push_back(std::move(row));
  }
  return j;
}

}  // namespace

void write_table(const EvalReport& report, std::ostream& out) {
  char line[256];
  out << "Controller comparison (" << report.label << "), test " << report.test_start << " .. " << report.test_end
      << ", " << report.test_rows << " steps, horizon " << report.horizon << "\n";
  std::snprintf(line, sizeof line, "%-20s %22s %10s %12s %16s\n", "Controller", "Cost ($)", "Gap", "Data Used",
                "Testing Time (s)");
  out << line << std::string(84, '-') << '\n';
  for (const auto& r : report.rows) {
    char cost[64];
    if (r.ci_half_width) {
      std::snprintf(cost, sizeof cost, "%.2f +- %.2f", r.total_cost, *r.ci_half_width);
    } else {
      std::snprintf(cost, sizeof cost, "%.2f", r.total_cost);
    }
    char gap[32];
    if (r.name == kGroundTruth) {
      std::snprintf(gap, sizeof gap, "-");
    } else {
      std::snprintf(gap, sizeof gap, "%.2f%%", 100.0 * r.optimality_gap);
    }
    std::snprintf(line, sizeof line, "%-20s %22s %10s %12ld %16.4f\n", r.name.c_str(), cost, gap, r.train_samples,
                  r.testing_time_s);
    out << line;
  }
  std::snprintf(line, sizeof line, "forecast RMSE (%s): price %.5f, demand %.5f over %zu origins\n",
                to_string(report.forecaster), report.forecast.price_rmse_overall, report.forecast.demand_rmse_overall,
                report.forecast.origins);
  out << line;
}

std::string to_json(const EvalReport& report) { return report_json(report).dump(2); }

std::string to_json(const RobustnessReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["unshifted"] = report_json(report.unshifted);
  j["shifted"] = report_json(report.shifted);
  auto& deltas = j["gap_delta_pct"] = nlohmann::ordered_json::object();
  for (const auto& r : report.shifted.rows) deltas[r.name] = 100.0 * report.gap_delta.at(r.name);
  return j.dump(2);
}

void write_summary_csv(const EvalReport& report, std::ostream& out) {
  using text_io::format_double;
  out << "controller,cost,ci_half_width,gap_pct,testing_time_s,median_decision_s,data_used\n";
  for (const auto& r : report.rows) {
    out << r.name << ',' << format_double(r.total_cost) << ','
        << (r.ci_half_width ? format_double(*r.ci_half_width) : "") << ','
        << format_double(100.0 * r.optimality_gap) << ',' << format_double(r.testing_time_s) << ','
        << format_double(r.median_decision_s) << ',' << r.train_samples << '\n';
  }
}

void write_action_log_csv(const EvalReport& report, std::ostream& out) {
  using text_io::format_double;
  out << "controller,seed_index,t,action\n";
  for (const auto& r : report.rows) {
    for (std::size_t s = 0; s < r.action_logs.size(); ++s) {
      for (std::size_t t = 0; t < r.action_logs[s].size(); ++t) {
        out << r.name << ',' << s << ',' << t << ',' << format_double(r.action_logs[s][t]) << '\n';
      }
    }
  }
}

}  // namespace battbench::bench
