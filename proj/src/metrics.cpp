#include "tfbench/metrics.hpp"

#include <cmath>

#include "tfbench/errors.hpp"

namespace tfbench {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* name) {
  if (a.size() != b.size()) {
    throw ContractError(std::string(name) + ": lengths differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ContractError(std::string(name) + ": empty input");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw ContractError(std::string(name) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace

double mae(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

double mse(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

MetricsReport evaluate(const std::string& model, std::span<const double> predictions, const WindowedDataset& test,
                       const Normalizer& norm, std::span<const double> prices) {
  if (test.rows == 0) throw ContractError("evaluate: empty test set");
  if (predictions.size() != test.targets.size()) {
    throw ContractError("evaluate: expected " + std::to_string(test.targets.size()) + " predictions, got " +
                        std::to_string(predictions.size()));
  }
  if (test.source_offset + test.rows + test.window + test.horizon - 1 > prices.size()) {
    throw ContractError("evaluate: price series is shorter than the test windows require");
  }
  std::vector<double> actual_price(test.targets.size()), predicted_price(test.targets.size());
  for (std::size_t i = 0; i < test.rows; ++i) {
    for (std::size_t k = 0; k < test.horizon; ++k) {
      actual_price[i * test.horizon + k] = prices[test.first_target_index(i) + k];
      predicted_price[i * test.horizon + k] = norm.invert(predictions[i * test.horizon + k]);
    }
  }
  MetricsReport r;
  r.model = model;
  r.window = test.window;
  r.horizon = test.horizon;
  r.n_test = test.rows;
  r.mae_normalized = mae(test.targets, predictions);
  r.mse_normalized = mse(test.targets, predictions);
  r.mae_price = mae(actual_price, predicted_price);
  r.mse_price = mse(actual_price, predicted_price);
  return r;
}

std::vector<double> persistence_predictions(const WindowedDataset& data) {
  std::vector<double> out;
  out.reserve(data.rows * data.horizon);
  for (std::size_t i = 0; i < data.rows; ++i) out.insert(out.end(), data.horizon, data.input_row(i).back());
  return out;
}

}  // namespace tfbench
