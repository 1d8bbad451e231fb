#include "ssmpc/forecaster.hpp"

#include <stdexcept>

#include "ssmpc/io.hpp"

namespace ssmpc {

FileForecaster FileForecaster::from_file(const std::filesystem::path& path) {
  return FileForecaster(load_forecast(path));
}

ForecastSeries FileForecaster::forecast(int /*k*/, int horizon) const {
  if (horizon != series_.horizon()) {
    throw std::invalid_argument("forecast horizon " + std::to_string(series_.horizon()) +
                                " does not match controller horizon " + std::to_string(horizon));
  }
  return series_;
}

Matrix persistence_forecast(const Matrix& history, int horizon, int period) {
  if (period < 1) throw std::invalid_argument("period must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const int length = static_cast<int>(history.rows());
  if (length < period) {
    throw std::invalid_argument("history has " + std::to_string(length) +
                                " samples, shorter than period " + std::to_string(period));
  }
  const int k = length - 1;
  Matrix out(horizon, history.cols());
  for (int j = 1; j <= horizon; ++j) {
    out.row(j - 1) = history.row(k + 1 + (j - 1) % period - period);
  }
  return out;
}

ForecastSeries seasonal_persistence_forecast(const Matrix& demand_history,
                                             const Matrix& price_history, int horizon,
                                             int period) {
  return {persistence_forecast(demand_history, horizon, period),
          persistence_forecast(price_history, horizon, period)};
}

PersistenceForecaster::PersistenceForecaster(Matrix demand_series, Matrix price_series,
                                             int offset, int period)
    : demand_(std::move(demand_series)),
      price_(std::move(price_series)),
      offset_(offset),
      period_(period) {
  if (offset_ + 1 < period_) throw std::invalid_argument("need at least one period of history");
}

ForecastSeries PersistenceForecaster::forecast(int k, int horizon) const {
  const int rows = offset_ + k + 1;
  if (rows > demand_.rows() || rows > price_.rows()) {
    throw std::out_of_range("realized series exhausted at step " + std::to_string(k));
  }
  return seasonal_persistence_forecast(demand_.topRows(rows), price_.topRows(rows), horizon,
                                       period_);
}

}  // namespace ssmpc
