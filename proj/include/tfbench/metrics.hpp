#pragma once

#include <span>
#include <string>
#include <vector>

#include "tfbench/data.hpp"

namespace tfbench {

// Mean absolute and mean squared error. Throw ContractError on length
// mismatch, empty input or non-finite values.
double mae(std::span<const double> actual, std::span<const double> predicted);
double mse(std::span<const double> actual, std::span<const double> predicted);

struct MetricsReport {
  std::string model;
  std::size_t window = 0;
  std::size_t horizon = 0;
  double mae_normalized = 0.0;
  double mse_normalized = 0.0;
  double mae_price = 0.0;
  double mse_price = 0.0;
  std::size_t n_test = 0;
};

// Scores normalized predictions [rows, h] against the test windows, pooled
// over rows and steps. Price-unit metrics compare inverse-transformed
// predictions with the raw closes in `prices`, the full series the windows
// were cut from (indexed via the dataset's source offset).
MetricsReport evaluate(const std::string& model, std::span<const double> predictions, const WindowedDataset& test,
                       const Normalizer& norm, std::span<const double> prices);

// Predicts the last observed value for every step.
std::vector<double> persistence_predictions(const WindowedDataset& data);

}  // namespace tfbench
