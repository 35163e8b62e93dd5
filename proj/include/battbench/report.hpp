#pragma once

#include <iosfwd>
#include <string>

#include "battbench/bench.hpp"

namespace battbench::bench {

inline constexpr char kReportSchema[] = "battbench-report/1";

/// Human-readable table in the layout of the usual results table: cost with
/// CI, gap, data used, testing time.
void write_table(const EvalReport& report, std::ostream& out);

/// Machine-readable report. Keys:
///   schema, label, dataset{train_rows,test_rows,test_start,test_end},
///   horizon, soc0, seeds[], forecaster{kind,price_rmse,demand_rmse},
///   controllers[]{name,cost,ci_half_width|null,optimality_gap_pct,
///                 data_used,testing_time_s,median_decision_s,per_seed_costs[]}
std::string to_json(const EvalReport& report);
std::string to_json(const RobustnessReport& report);

/// `controller,cost,ci_half_width,gap_pct,testing_time_s,median_decision_s,data_used`
void write_summary_csv(const EvalReport& report, std::ostream& out);

/// `controller,seed_index,t,action` for every stored action log.
void write_action_log_csv(const EvalReport& report, std::ostream& out);

}  // namespace battbench::bench
