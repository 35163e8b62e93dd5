#include "battbench/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "battbench/errors.hpp"
#include "battbench/text_io.hpp"

namespace battbench {

namespace {

constexpr double kRidgeLambda = 1e-6;
constexpr char kSchemaTag[] = "battbench-forecaster";
constexpr int kSchemaVersion = 1;

using Channel = Eigen::VectorXd ExogenousSeries::*;

// Calendar part of the feature vector for the target instant.
void calendar_features(Timestamp ts, Eigen::Ref<Eigen::VectorXd> out) {
  const double angle = 2.0 * std::numbers::pi * hour_of(ts) / 24.0;
  out[0] = std::sin(angle);
  out[1] = std::cos(angle);
  out[2] = is_weekend(ts) ? 1.0 : 0.0;
  out[3] = 1.0;
}

// Features for predicting values[tau] from values[tau - lag].
template <typename Values>
Eigen::VectorXd ar_features(const ForecasterModel& model, const ChannelModel& ch, const Values& values,
                            std::size_t tau, Timestamp target_ts) {
  Eigen::VectorXd x(model.feature_count());
  for (std::size_t i = 0; i < model.lags.size(); ++i) {
    x[i] = (values[tau - model.lags[i]] - ch.mean) / ch.sd;
  }
  calendar_features(target_ts, x.tail(4));
  return x;
}

ChannelModel fit_channel(ForecasterModel& model, const ExogenousSeries& history, Channel channel,
                         const char* name) {
  const Eigen::VectorXd& values = history.*channel;
  ChannelModel ch;
  ch.mean = values.mean();
  ch.sd = std::sqrt((values.array() - ch.mean).square().mean());
  if (!(ch.sd > 1e-12 * std::max(1.0, std::abs(ch.mean)))) {
    ch.sd = 1.0;
    model.warnings.push_back(std::string(name) + ": zero variance, normalizing with sd=1");
  }
  if (model.kind == ForecasterKind::SeasonalNaive) return ch;

  const std::size_t depth = static_cast<std::size_t>(model.lag_depth());
  const std::size_t rows = history.size() - depth;
  const std::size_t cols = model.feature_count();
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd target(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t tau = depth + r;
    design.row(r) = ar_features(model, ch, values, tau, history.timestamps[tau]).transpose();
    target[r] = (values[tau] - ch.mean) / ch.sd;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() == static_cast<Eigen::Index>(cols)) {
    ch.coef = qr.solve(target);
  } else {
    model.warnings.push_back(std::string(name) + ": rank-deficient design (rank " +
                             std::to_string(qr.rank()) + " of " + std::to_string(cols) +
                             "), using ridge fallback");
    Eigen::MatrixXd normal = design.transpose() * design;
    normal.diagonal().array() += kRidgeLambda;
    ch.coef = normal.ldlt().solve(design.transpose() * target);
  }
  return ch;
}

// Recursive forecast of one channel; entry 0 is the observation at t.
Eigen::VectorXd predict_channel(const ForecasterModel& model, const ChannelModel& ch,
                                const ExogenousSeries& history, Channel channel, std::size_t t,
                                int horizon) {
  const Eigen::VectorXd& values = history.*channel;
  const std::size_t depth = static_cast<std::size_t>(model.lag_depth());
  // buffer[i] holds the value at time t + 1 - depth + i.
  std::vector<double> buffer(depth + horizon);
  for (std::size_t i = 0; i < depth; ++i) buffer[i] = values[t + 1 - depth + i];

  Eigen::VectorXd out(horizon + 1);
  out[0] = values[t];
  for (int k = 1; k <= horizon; ++k) {
    const std::size_t pos = depth - 1 + k;
    double pred = 0.0;
    if (model.kind == ForecasterKind::SeasonalNaive) {
      pred = buffer[pos - model.season_length];
    } else {
      const Timestamp ts = history.timestamps[t] + std::chrono::hours{k};
      const Eigen::VectorXd x = ar_features(model, ch, buffer, pos, ts);
      pred = ch.mean + ch.sd * x.dot(ch.coef);
    }
    pred = std::max(pred, 0.0);
    buffer[pos] = pred;
    out[k] = pred;
  }
  return out;
}

}  // namespace

const char* to_string(ForecasterKind kind) {
  switch (kind) {
    case ForecasterKind::SeasonalNaive: return "seasonal_naive";
    case ForecasterKind::ArLinear: return "ar_linear";
  }
  return "?";
}

ForecasterKind forecaster_kind_from_string(const std::string& name) {
  if (name == "seasonal_naive") return ForecasterKind::SeasonalNaive;
  if (name == "ar_linear") return ForecasterKind::ArLinear;
  throw Error(ErrorKind::Validation,
              "unknown forecaster kind '" + name + "' (expected seasonal_naive or ar_linear)");
}

int ForecasterModel::lag_depth() const {
  if (kind == ForecasterKind::SeasonalNaive) return season_length;
  return lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
}

std::size_t ForecasterModel::min_fit_history() const {
  return static_cast<std::size_t>(2 * season_length + lag_depth());
}

ForecasterModel fit(const ExogenousSeries& history, ForecasterKind kind, int season_length,
                    const std::vector<int>& lags) {
  if (season_length < 1) throw Error(ErrorKind::Validation, "season_length must be >= 1");
  ForecasterModel model;
  model.kind = kind;
  model.season_length = season_length;
  if (kind == ForecasterKind::ArLinear) {
    if (lags.empty() || *std::min_element(lags.begin(), lags.end()) < 1) {
      throw Error(ErrorKind::Validation, "ar_linear lags must be positive");
    }
    model.lags = lags;
  }
  if (history.size() < model.min_fit_history()) {
    throw Error(ErrorKind::Size, std::string("insufficient history for ") + to_string(kind) + ": need " +
                                     std::to_string(model.min_fit_history()) + " rows, got " +
                                     std::to_string(history.size()));
  }
  model.price = fit_channel(model, history, &ExogenousSeries::prices, "price");
  model.demand = fit_channel(model, history, &ExogenousSeries::demands, "demand");
  model.train_rows = history.size();
  model.fitted = true;
  return model;
}

ForecastHorizon predict_horizon(const ForecasterModel& model, const ExogenousSeries& history,
                                std::size_t t, int horizon) {
  if (!model.fitted) throw Error(ErrorKind::State, "forecaster used before fit");
  if (horizon < 1) throw Error(ErrorKind::Validation, "horizon must be >= 1");
  if (t >= history.size()) throw Error(ErrorKind::SeriesExhausted, "forecast origin beyond history");
  if (t + 1 < static_cast<std::size_t>(model.lag_depth())) {
    throw Error(ErrorKind::Size, "forecast origin " + std::to_string(t) + " has fewer than " +
                                     std::to_string(model.lag_depth()) + " rows of history");
  }
  ForecastHorizon out;
  out.origin_t = t;
  out.prices_hat = predict_channel(model, model.price, history, &ExogenousSeries::prices, t, horizon);
  out.demands_hat = predict_channel(model, model.demand, history, &ExogenousSeries::demands, t, horizon);
  return out;
}

ForecastHorizon oracle_horizon(const ExogenousSeries& series, std::size_t t, int horizon) {
  if (t + horizon >= series.size()) throw Error(ErrorKind::SeriesExhausted, "oracle horizon past series end");
  return ForecastHorizon{series.prices.segment(t, horizon + 1), series.demands.segment(t, horizon + 1), t};
}

ForecastErrors forecast_error(const ForecasterModel& model, const ExogenousSeries& test, int horizon,
                              const ExogenousSeries* context) {
  const ExogenousSeries series = context ? concat(*context, test) : test;
  const std::size_t offset = context ? context->size() : 0;
  const std::size_t depth = static_cast<std::size_t>(model.lag_depth());

  ForecastErrors err;
  const auto leads = horizon + 1;
  err.price_mae = err.price_rmse = err.demand_mae = err.demand_rmse = Eigen::VectorXd::Zero(leads);
  for (std::size_t t = offset; t + horizon < series.size(); ++t) {
    if (t + 1 < depth) continue;
    const auto fc = predict_horizon(model, series, t, horizon);
    const Eigen::ArrayXd dp = fc.prices_hat.array() - series.prices.segment(t, leads).array();
    const Eigen::ArrayXd dd = fc.demands_hat.array() - series.demands.segment(t, leads).array();
    err.price_mae.array() += dp.abs();
    err.price_rmse.array() += dp.square();
    err.demand_mae.array() += dd.abs();
    err.demand_rmse.array() += dd.square();
    ++err.origins;
  }
  if (err.origins == 0) return err;
  const double n = static_cast<double>(err.origins);
  err.price_rmse_overall = std::sqrt(err.price_rmse.tail(horizon).sum() / (n * horizon));
  err.demand_rmse_overall = std::sqrt(err.demand_rmse.tail(horizon).sum() / (n * horizon));
  err.price_mae /= n;
  err.demand_mae /= n;
  err.price_rmse = (err.price_rmse / n).cwiseSqrt();
  err.demand_rmse = (err.demand_rmse / n).cwiseSqrt();
  return err;
}

void save_model(const ForecasterModel& model, std::ostream& out) {
  if (!model.fitted) throw Error(ErrorKind::State, "refusing to save an unfitted forecaster");
  using text_io::format_double;
  out << kSchemaTag << ' ' << kSchemaVersion << '\n';
  out << "kind " << to_string(model.kind) << '\n';
  out << "season_length " << model.season_length << '\n';
  out << "train_rows " << model.train_rows << '\n';
  out << "lags " << model.lags.size();
  for (int l : model.lags) out << ' ' << l;
  out << '\n';
  for (const auto& [name, ch] : {std::pair{"price", &model.price}, std::pair{"demand", &model.demand}}) {
    out << name << ' ' << format_double(ch->mean) << ' ' << format_double(ch->sd) << ' ' << ch->coef.size();
    for (Eigen::Index i = 0; i < ch->coef.size(); ++i) out << ' ' << format_double(ch->coef[i]);
    out << '\n';
  }
  out << "end\n";
}

void save_model(const ForecasterModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  save_model(model, out);
}

ForecasterModel load_model(std::istream& in) {
  using namespace text_io;
  expect_token(in, kSchemaTag);
  if (read_int(in, "schema version") != kSchemaVersion) {
    throw Error(ErrorKind::Parse, "unsupported forecaster schema version");
  }
  ForecasterModel model;
  expect_token(in, "kind");
  model.kind = forecaster_kind_from_string(next_token(in, "kind"));
  expect_token(in, "season_length");
  model.season_length = static_cast<int>(read_int(in, "season_length"));
  expect_token(in, "train_rows");
  model.train_rows = static_cast<std::size_t>(read_int(in, "train_rows"));
  expect_token(in, "lags");
  const long n_lags = read_int(in, "lag count");
  for (long i = 0; i < n_lags; ++i) model.lags.push_back(static_cast<int>(read_int(in, "lag")));
  for (auto [name, ch] : {std::pair{"price", &model.price}, std::pair{"demand", &model.demand}}) {
    expect_token(in, name);
    ch->mean = read_double(in, "mean");
    ch->sd = read_double(in, "sd");
    const long n = read_int(in, "coefficient count");
    if (n != 0 && static_cast<std::size_t>(n) != model.feature_count()) {
      throw Error(ErrorKind::Parse, "coefficient count does not match the feature design");
    }
    ch->coef.resize(n);
    for (long i = 0; i < n; ++i) ch->coef[i] = read_double(in, "coefficient");
  }
  expect_token(in, "end");
  if (model.kind == ForecasterKind::ArLinear && model.price.coef.size() == 0) {
    throw Error(ErrorKind::Parse, "ar_linear model without coefficients");
  }
  model.fitted = true;
  return model;
}

ForecasterModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return load_model(in);
}

}  // namespace battbench
