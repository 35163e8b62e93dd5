#include "battbench/series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "battbench/errors.hpp"
#include "battbench/rng.hpp"

namespace battbench {

namespace {



std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool parse_double(std::string_view text, double& out) {
  const auto t = trim(text);
  if (t.empty()) return false;
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

int hour_of(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  return static_cast<int>(std::chrono::duration_cast<std::chrono::hours>(ts - day).count());
}

bool is_weekend(Timestamp ts) {
  const std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(ts)};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

std::string format_timestamp(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day ymd{day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hour_of(ts));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  const auto t = trim(text);
  int y = 0, h = 0, mi = 0, s = 0;
  unsigned mo = 0, d = 0;
  char tail = 0;
  if (t.size() != 19 ||
      std::sscanf(t.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 6) {
    throw Error(ErrorKind::Parse, "malformed timestamp '" + t + "', expected YYYY-MM-DDThh:00:00");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok() || h < 0 || h > 23) {
    throw Error(ErrorKind::Parse, "invalid calendar timestamp '" + t + "'");
  }
  if (mi != 0 || s != 0) {
    throw Error(ErrorKind::Parse, "timestamp '" + t + "' is not on the hour");
  }
  return Timestamp{std::chrono::sys_days{ymd}} + std::chrono::hours{h};
}

void ExogenousSeries::validate() const {
  const auto n = size();
  if (static_cast<std::size_t>(prices.size()) != n ||
      static_cast<std::size_t>(demands.size()) != n || hours.size() != n || weekend.size() != n) {
    throw Error(ErrorKind::Validation, "series columns have unequal lengths");
  }
  if (n < 2) throw Error(ErrorKind::Size, "series needs at least 2 steps, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(prices[i]) || prices[i] < 0.0) {
      throw Error(ErrorKind::Validation,
                  "price at " + format_timestamp(timestamps[i]) + " is negative or not finite");
    }
    if (!std::isfinite(demands[i]) || demands[i] < 0.0) {
      throw Error(ErrorKind::Validation,
                  "demand at " + format_timestamp(timestamps[i]) + " is negative or not finite");
    }
    if (hours[i] != hour_of(timestamps[i]) || weekend[i] != is_weekend(timestamps[i])) {
      throw Error(ErrorKind::Validation, "calendar features disagree with timestamps");
    }
    if (i > 0 && timestamps[i] - timestamps[i - 1] != std::chrono::hours{1}) {
      throw Error(ErrorKind::Alignment, "timestamps not hourly between " +
                                            format_timestamp(timestamps[i - 1]) + " and " +
                                            format_timestamp(timestamps[i]));
    }
  }
}

ExogenousSeries ExogenousSeries::slice(std::size_t begin, std::size_t length) const {
  if (begin + length > size()) throw Error(ErrorKind::Size, "slice out of range");
  ExogenousSeries out;
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + begin + length);
  out.prices = prices.segment(begin, length);
  out.demands = demands.segment(begin, length);
  out.hours.assign(hours.begin() + begin, hours.begin() + begin + length);
  out.weekend.assign(weekend.begin() + begin, weekend.begin() + begin + length);
  return out;
}

ExogenousSeries make_series(std::vector<Timestamp> timestamps, Eigen::VectorXd prices,
                            Eigen::VectorXd demands) {
  ExogenousSeries s;
  s.hours.reserve(timestamps.size());
  s.weekend.reserve(timestamps.size());
  for (auto ts : timestamps) {
    s.hours.push_back(hour_of(ts));
    s.weekend.push_back(is_weekend(ts));
  }
  s.timestamps = std::move(timestamps);
  s.prices = std::move(prices);
  s.demands = std::move(demands);
  s.validate();
  return s;
}

ExogenousSeries read_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, source_name + ": empty file");
  ++line_no;
  if (trim(line) != "timestamp,price,demand") {
    throw Error(ErrorKind::Parse,
                source_name + ":1: expected header 'timestamp,price,demand', got '" + trim(line) + "'");
  }
  std::vector<Timestamp> ts;
  std::vector<double> prices, demands;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw Error(ErrorKind::Parse, where + "expected 3 comma-separated fields");
    }
    Timestamp t;
    try {
      t = parse_timestamp(std::string_view(line).substr(0, c1));
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, where + e.what());
    }
    double p = 0.0, d = 0.0;
    if (!parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1), p) ||
        !parse_double(std::string_view(line).substr(c2 + 1), d)) {
      throw Error(ErrorKind::Parse, where + "malformed number");
    }
    if (p < 0.0 || d < 0.0) throw Error(ErrorKind::Validation, where + "negative price or demand");
    if (!ts.empty()) {
      if (t == ts.back()) throw Error(ErrorKind::Alignment, where + "duplicate timestamp");
      if (t - ts.back() != std::chrono::hours{1}) {
        throw Error(ErrorKind::Alignment, where + "gap or disorder before " + format_timestamp(t));
      }
    }
    ts.push_back(t);
    prices.push_back(p);
    demands.push_back(d);
  }
  return make_series(std::move(ts), Eigen::Map<Eigen::VectorXd>(prices.data(), prices.size()),
                     Eigen::Map<Eigen::VectorXd>(demands.data(), demands.size()));
}

ExogenousSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_csv(in, path.string());
}

void write_csv(const ExogenousSeries& series, std::ostream& out) {
  out << "timestamp,price,demand\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_timestamp(series.timestamps[i]) << ',' << format_number(series.prices[i]) << ','
        << format_number(series.demands[i]) << '\n';
  }
}

void write_csv(const ExogenousSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_csv(series, out);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, "generator: " + m); };
  if (days < 1) fail("days must be >= 1");
  if (price_base <= 0.0 || demand_base <= 0.0) fail("bases must be positive");
  if (price_daily_amp < 0.0 || price_daily_amp >= price_base) fail("need 0 <= price_daily_amp < price_base");
  if (demand_daily_amp < 0.0 || demand_daily_amp >= demand_base) fail("need 0 <= demand_daily_amp < demand_base");
  if (price_noise_sd < 0.0 || demand_noise_sd < 0.0) fail("noise sd must be >= 0");
  if (demand_weekend_scale <= 0.0) fail("demand_weekend_scale must be positive");
  if (shift) {
    if (shift->demand_mean_scale <= 0.0) fail("shift.demand_mean_scale must be positive");
    if (shift->demand_shape_skew < 0.0 || shift->demand_shape_skew * demand_daily_amp >= demand_base) {
      fail("shift.demand_shape_skew out of range");
    }
  }
}

ExogenousSeries generate(const GeneratorConfig& config) {
  config.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const std::size_t n = static_cast<std::size_t>(config.days) * 24;
  Rng price_rng(derive_seed(config.seed, 1));
  Rng demand_rng(derive_seed(config.seed, 2));
  const double skew = config.shift ? config.shift->demand_shape_skew : 1.0;
  const double scale = config.shift ? config.shift->demand_mean_scale : 1.0;

  std::vector<Timestamp> ts(n);
  Eigen::VectorXd prices(n), demands(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = config.start + std::chrono::hours{static_cast<long>(i)};
    const double h = hour_of(ts[i]);
    const double shape =
        (std::sin(two_pi * (h - 9.0) / 24.0) + 0.6 * std::sin(2.0 * two_pi * (h - 3.0) / 24.0)) / 1.6;
    const double price = config.price_base + config.price_daily_amp * shape +
                         config.price_noise_sd * price_rng.normal();
    double demand = config.demand_base +
                    config.demand_daily_amp * skew * std::sin(two_pi * (h - 12.0) / 24.0);
    if (is_weekend(ts[i])) demand *= config.demand_weekend_scale;
    demand += config.demand_noise_sd * demand_rng.normal();
    prices[i] = std::max(price, 0.0);
    demands[i] = std::max(demand, 0.0) * scale;
  }
  return make_series(std::move(ts), std::move(prices), std::move(demands));
}

std::pair<ExogenousSeries, ExogenousSeries> split(const ExogenousSeries& series, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw Error(ErrorKind::Validation, "train_frac must lie in (0, 1)");
  }
  const auto n = series.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
  if (n_train < kMinSplitLength || n - std::min(n, n_train) < kMinSplitLength) {
    throw Error(ErrorKind::Size, "series of length " + std::to_string(n) +
                                     " too short to split into two parts of >= " +
                                     std::to_string(kMinSplitLength) + " steps");
  }
  return {series.slice(0, n_train), series.slice(n_train, n - n_train)};
}

ExogenousSeries concat(const ExogenousSeries& head, const ExogenousSeries& tail) {
  if (head.size() == 0) return tail;
  if (tail.size() == 0) return head;
  if (tail.timestamps.front() - head.timestamps.back() != std::chrono::hours{1}) {
    throw Error(ErrorKind::Alignment, "cannot concatenate: " + format_timestamp(tail.timestamps.front()) +
                                          " does not follow " + format_timestamp(head.timestamps.back()));
  }
  ExogenousSeries out = head;
  out.timestamps.insert(out.timestamps.end(), tail.timestamps.begin(), tail.timestamps.end());
  out.prices.conservativeResize(head.size() + tail.size());
  out.prices.tail(tail.size()) = tail.prices;
  out.demands.conservativeResize(head.size() + tail.size());
  out.demands.tail(tail.size()) = tail.demands;
  out.hours.insert(out.hours.end(), tail.hours.begin(), tail.hours.end());
  out.weekend.insert(out.weekend.end(), tail.weekend.begin(), tail.weekend.end());
  return out;
}

}  // namespace battbench
