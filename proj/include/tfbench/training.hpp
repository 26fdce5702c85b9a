#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tfbench/data.hpp"
#include "tfbench/models.hpp"

namespace tfbench {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  // Epochs without validation improvement before stopping.
  std::size_t early_stop_patience = 20;
  // Chronological tail of the training windows held out for early stopping.
  // With 0 every window trains and selection uses the training loss.
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double gradient_clip_norm = 1.0;  // 0 disables clipping
  // Stop as soon as the evaluation-mode training MSE falls below this value
  // (0 disables the check).
  double target_train_mse = 0.0;

  // Throws ConfigError on an invalid configuration.
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  // Reads the keys above from `values`, leaving others untouched.
  static TrainConfig from_map(const std::map<std::string, std::string>& values);
  static const std::vector<std::string>& keys();
};

struct TrainResult {
  std::vector<double> train_loss;       // mean minibatch loss per epoch
  std::vector<double> validation_loss;  // evaluation-mode MSE per epoch; empty without validation
  std::size_t best_epoch = 0;           // 1-based epoch whose parameters were kept
  double best_loss = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  bool reached_target = false;
};

class Adam {
 public:
  Adam(const nn::ParameterStore& params, const TrainConfig& cfg);
  // Applies one update from the gradients currently held by the parameters.
  void step(nn::ParameterStore& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Global L2 norm of all parameter gradients.
double gradient_norm(const nn::ParameterStore& params);

// Minimizes MSE on the windows with Adam over seeded shuffled minibatches,
// clipping the global gradient norm. The parameters of the best epoch (by
// validation MSE) are restored before returning. Throws TrainingError if a
// loss becomes non-finite.
TrainResult train(ForecastModel& model, const WindowedDataset& data, const TrainConfig& cfg);

// Evaluation-mode predictions for every row, [rows, h] row-major.
std::vector<double> predict_dataset(const ForecastModel& model, const WindowedDataset& data);

}  // namespace tfbench
