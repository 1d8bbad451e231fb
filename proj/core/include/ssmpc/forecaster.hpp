#pragma once

#include <filesystem>

#include "ssmpc/network_model.hpp"

namespace ssmpc {

/// Nominal H-step-ahead forecast; row j-1 of each matrix is the forecast for
/// time k+j.
struct ForecastSeries {
  Matrix demand;  // horizon x n_d, m^3/s
  Matrix price;   // horizon x n_u

  int horizon() const { return static_cast<int>(demand.rows()); }
};

/// Source of nominal forecasts at time k.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual ForecastSeries forecast(int k, int horizon) const = 0;
};

/// Replays a forecast read from a forecaster.json document at every k.
class FileForecaster : public Forecaster {
 public:
  explicit FileForecaster(ForecastSeries series) : series_(std::move(series)) {}
  static FileForecaster from_file(const std::filesystem::path& path);

  ForecastSeries forecast(int k, int horizon) const override;

 private:
  ForecastSeries series_;
};

/// y_hat(k+j | k) = y(k+j-period), wrapping onto the last observed period
/// when j exceeds it. `history` has one row per time step; the last row is
/// the current time k.
Matrix persistence_forecast(const Matrix& history, int horizon, int period);

ForecastSeries seasonal_persistence_forecast(const Matrix& demand_history,
                                             const Matrix& price_history, int horizon,
                                             int period);

/// Seasonal persistence over a realized series: the forecast at step k only
/// sees rows [0, offset + k] of the series, where `offset` is the number of
/// history samples that precede step 0.
class PersistenceForecaster : public Forecaster {
 public:
  PersistenceForecaster(Matrix demand_series, Matrix price_series, int offset, int period);

  ForecastSeries forecast(int k, int horizon) const override;

 private:
  Matrix demand_;
  Matrix price_;
  int offset_;
  int period_;
};

}  // namespace ssmpc
