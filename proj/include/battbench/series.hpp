#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace battbench {

using Timestamp = std::chrono::sys_seconds;

/// Aligned hourly price and demand trace with the calendar features the
/// controllers see (hour of day, weekend flag).
struct ExogenousSeries {
  std::vector<Timestamp> timestamps;
  Eigen::VectorXd prices;   // currency / kWh
  Eigen::VectorXd demands;  // kWh per step
  std::vector<int> hours;
  std::vector<bool> weekend;

  std::size_t size() const { return timestamps.size(); }

  /// Throws Error{Validation|Alignment} when the invariants do not hold.
  void validate() const;

  ExogenousSeries slice(std::size_t begin, std::size_t length) const;
};

/// Builds a series from raw columns, deriving calendar features.
ExogenousSeries make_series(std::vector<Timestamp> timestamps, Eigen::VectorXd prices,
                            Eigen::VectorXd demands);

/// Hour of day and weekend flag (Saturday/Sunday) of a UTC instant.
int hour_of(Timestamp ts);
bool is_weekend(Timestamp ts);

/// `YYYY-MM-DDThh:00:00`
std::string format_timestamp(Timestamp ts);
Timestamp parse_timestamp(std::string_view text);

ExogenousSeries load_csv(const std::filesystem::path& path);
ExogenousSeries read_csv(std::istream& in, const std::string& source_name = "<stream>");
void write_csv(const ExogenousSeries& series, const std::filesystem::path& path);
void write_csv(const ExogenousSeries& series, std::ostream& out);

struct DemandShift {
  double demand_mean_scale = 1.0;
  double demand_shape_skew = 1.0;  // multiplies the daily demand amplitude
};

/// Synthetic stand-in for real market and building data.
///
/// price(t)  = price_base + price_daily_amp * s(h) + N(0, price_noise_sd)
/// demand(t) = (demand_base + demand_daily_amp * skew * sin(2pi (h - 12) / 24))
///             * (weekend ? demand_weekend_scale : 1) + N(0, demand_noise_sd)
///
/// with s(h) = (sin(2pi (h - 9) / 24) + 0.6 sin(4pi (h - 3) / 24)) / 1.6, both
/// series truncated at zero, and the shifted demand scaled by
/// demand_mean_scale afterwards. Price and demand noise come from separate
/// streams so a demand shift never changes the prices of a seed.
struct GeneratorConfig {
  std::uint64_t seed = 7;
  int days = 60;
  Timestamp start = Timestamp{std::chrono::sys_days{std::chrono::year{2024} / 1 / 1}};
  double price_base = 0.12;
  double price_daily_amp = 0.08;
  double price_noise_sd = 0.01;
  double demand_base = 3.0;
  double demand_daily_amp = 1.5;
  double demand_weekend_scale = 0.8;
  double demand_noise_sd = 0.3;
  std::optional<DemandShift> shift;

  void validate() const;
};

ExogenousSeries generate(const GeneratorConfig& config);

/// Contiguous chronological split; train gets round(n * train_frac) rows.
std::pair<ExogenousSeries, ExogenousSeries> split(const ExogenousSeries& series,
                                                  double train_frac);

/// Concatenates two series; `tail` must continue `head` hour by hour.
ExogenousSeries concat(const ExogenousSeries& head, const ExogenousSeries& tail);

/// Minimum length of each split half (one 24-step MPC horizon plus one).
inline constexpr std::size_t kMinSplitLength = 25;

}  // namespace battbench
