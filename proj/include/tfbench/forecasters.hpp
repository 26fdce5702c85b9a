#pragma once

// Uniform fit/predict/checkpoint interface over the neural and classical
// models of the benchmark grid.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tfbench/checkpoint.hpp"
#include "tfbench/classical.hpp"
#include "tfbench/data.hpp"
#include "tfbench/models.hpp"
#include "tfbench/training.hpp"

namespace tfbench {

struct ModelInfo {
  std::string id;       // used in run directories and tables
  std::string display;  // column label in the results table
  std::optional<Variant> variant;  // empty for the classical models
};

// All benchmark models in table order.
const std::vector<ModelInfo>& model_catalog();
// Throws ConfigError for an unknown id.
const ModelInfo& model_info(const std::string& id);
// Position in model_catalog().
std::size_t model_rank(const std::string& id);

struct ForecasterOptions {
  // Express inputs and targets relative to the last input value, adding it
  // back to predictions.
  bool anchor = true;
  TrainConfig train;
  // Overrides on top of ModelConfig::defaults for the variant.
  std::map<std::string, std::string> model_overrides;
  SVRParams svr;
  ForestParams forest;
};

class Forecaster {
 public:
  virtual ~Forecaster() = default;

  const std::string& id() const { return id_; }
  std::size_t window() const { return window_; }
  std::size_t horizon() const { return horizon_; }
  bool anchored() const { return anchor_; }

  // Fits on normalized windows. The loss curves are empty for classical
  // models.
  TrainResult fit(const WindowedDataset& train);
  // Normalized predictions [rows, h] row-major.
  std::vector<double> predict(const WindowedDataset& data) const;

  // Fitted state plus identity metadata (model, window, horizon, anchor).
  Checkpoint to_checkpoint() const;

 protected:
  Forecaster(std::string id, std::size_t window, std::size_t horizon, bool anchor)
      : id_(std::move(id)), window_(window), horizon_(horizon), anchor_(anchor) {}

  virtual TrainResult fit_rows(const WindowedDataset& train) = 0;
  virtual std::vector<double> predict_rows(const WindowedDataset& data) const = 0;
  virtual void save_state(Checkpoint& ckpt) const = 0;

 private:
  std::string id_;
  std::size_t window_;
  std::size_t horizon_;
  bool anchor_;
};

// `seed` drives initialization, shuffling, dropout and bootstrap draws.
std::unique_ptr<Forecaster> make_forecaster(const std::string& id, std::size_t window, std::size_t horizon,
                                            std::uint64_t seed, const ForecasterOptions& options = {});

// Rebuilds a fitted forecaster. Throws ParseError on missing or inconsistent
// entries.
std::unique_ptr<Forecaster> load_forecaster(const Checkpoint& ckpt);

}  // namespace tfbench
