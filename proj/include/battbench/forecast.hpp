#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "battbench/series.hpp"

namespace battbench {

enum class ForecasterKind { SeasonalNaive, ArLinear };

const char* to_string(ForecasterKind kind);
ForecasterKind forecaster_kind_from_string(const std::string& name);

/// Linear one-step model for one channel, in normalized units:
///   (x[tau] - mean) / sd = coef . [lags..., sin h, cos h, weekend, 1]
struct ChannelModel {
  double mean = 0.0;
  double sd = 1.0;
  Eigen::VectorXd coef;
};

struct ForecasterModel {
  ForecasterKind kind = ForecasterKind::ArLinear;
  int season_length = 24;
  std::vector<int> lags;  // ar_linear only
  ChannelModel price;
  ChannelModel demand;
  std::size_t train_rows = 0;
  bool fitted = false;
  std::vector<std::string> warnings;

  /// Deepest lag the model reads.
  int lag_depth() const;
  /// Shortest history fit() accepts.
  std::size_t min_fit_history() const;
  std::size_t feature_count() const { return lags.size() + 4; }
};

inline const std::vector<int> kDefaultArLags = {1, 2, 24, 168};

/// Forecasts for k = 0..T from origin t. Entry 0 is the observation at t.
struct ForecastHorizon {
  Eigen::VectorXd prices_hat;
  Eigen::VectorXd demands_hat;
  std::size_t origin_t = 0;
};

/// Fits one model per channel on the history. seasonal_naive stores only the
/// season length; ar_linear solves least squares over own-channel lags and
/// calendar terms, falling back to ridge (lambda = 1e-6) when the design is
/// rank deficient.
ForecasterModel fit(const ExogenousSeries& history, ForecasterKind kind, int season_length = 24,
                    const std::vector<int>& lags = kDefaultArLags);

/// Recursive multi-step forecast from origin t using rows 0..t of `history`
/// only. Later lags are fed by the model's own outputs; outputs are clipped at
/// zero.
ForecastHorizon predict_horizon(const ForecasterModel& model, const ExogenousSeries& history,
                                std::size_t t, int horizon);

/// The true future, i.e. a forecaster with zero error.
ForecastHorizon oracle_horizon(const ExogenousSeries& series, std::size_t t, int horizon);

struct ForecastErrors {
  // Indexed by lead time k = 0..T.
  Eigen::VectorXd price_mae, price_rmse, demand_mae, demand_rmse;
  std::size_t origins = 0;

  /// RMSE pooled over leads 1..T.
  double price_rmse_overall = 0.0;
  double demand_rmse_overall = 0.0;
};

/// Errors averaged over every origin of `test` with a full horizon ahead.
/// When `context` is given it is prepended as history, so that lags reaching
/// before the start of `test` are available.
ForecastErrors forecast_error(const ForecasterModel& model, const ExogenousSeries& test, int horizon,
                              const ExogenousSeries* context = nullptr);

void save_model(const ForecasterModel& model, std::ostream& out);
void save_model(const ForecasterModel& model, const std::filesystem::path& path);
ForecasterModel load_model(std::istream& in);
ForecasterModel load_model(const std::filesystem::path& path);

}  // namespace battbench
