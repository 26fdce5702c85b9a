#include "tfbench/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tfbench/errors.hpp"
#include "tfbench/metrics.hpp"
#include "tfbench/ops.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("invalid training config: " + why); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (early_stop_patience == 0 || early_stop_patience > max_epochs) {
    fail("early_stop_patience must lie in [1, max_epochs]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in [0, 1)");
  if (!(gradient_clip_norm >= 0.0)) fail("gradient_clip_norm must be non-negative");
  if (!(target_train_mse >= 0.0)) fail("target_train_mse must be non-negative");
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {"learning_rate", "adam_beta1",          "adam_beta2",
                                             "adam_eps",      "batch_size",          "max_epochs",
                                             "early_stop_patience", "validation_fraction", "seed",
                                             "gradient_clip_norm",  "target_train_mse"};
  return k;
}

namespace {

std::string exact(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"learning_rate", exact(learning_rate)},
          {"adam_beta1", exact(adam_beta1)},
          {"adam_beta2", exact(adam_beta2)},
          {"adam_eps", exact(adam_eps)},
          {"batch_size", std::to_string(batch_size)},
          {"max_epochs", std::to_string(max_epochs)},
          {"early_stop_patience", std::to_string(early_stop_patience)},
          {"validation_fraction", exact(validation_fraction)},
          {"seed", std::to_string(seed)},
          {"gradient_clip_norm", exact(gradient_clip_norm)},
          {"target_train_mse", exact(target_train_mse)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& values) {
  TrainConfig c;
  for (const auto& [key, value] : values) {
    try {
      std::size_t used = 0;
      auto real = [&] { double v = std::stod(value, &used); return v; };
      auto count = [&] {
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        return static_cast<std::size_t>(std::stoull(value, &used));
      };
      if (key == "learning_rate") c.learning_rate = real();
      else if (key == "adam_beta1") c.adam_beta1 = real();
      else if (key == "adam_beta2") c.adam_beta2 = real();
      else if (key == "adam_eps") c.adam_eps = real();
      else if (key == "batch_size") c.batch_size = count();
      else if (key == "max_epochs") c.max_epochs = count();
      else if (key == "early_stop_patience") c.early_stop_patience = count();
      else if (key == "validation_fraction") c.validation_fraction = real();
      else if (key == "seed") c.seed = static_cast<std::uint64_t>(count());
      else if (key == "gradient_clip_norm") c.gradient_clip_norm = real();
      else if (key == "target_train_mse") c.target_train_mse = real();
      else continue;
      if (used != value.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value '" + value + "' for training key '" + key + "'");
    }
  }
  return c;
}

Adam::Adam(const nn::ParameterStore& params, const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps) {
  for (const auto& [name, p] : params.entries()) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(nn::ParameterStore& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& entries = params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    const auto& g = p.node()->grad;
    if (g.empty()) continue;
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double gradient_norm(const nn::ParameterStore& params) {
  double s = 0.0;
  for (const auto& [name, p] : params.entries())
    for (double g : p.node()->grad) s += g * g;
  return std::sqrt(s);
}

namespace {

void clip_gradients(nn::ParameterStore& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (max_norm <= 0.0 || !(norm > max_norm)) return;
  const double scale = max_norm / norm;
  for (const auto& [name, p] : params.entries())
    for (double& g : p.node()->grad) g *= scale;
}

std::string parameter_norms(const nn::ParameterStore& params) {
  std::ostringstream os;
  for (const auto& [name, p] : params.entries()) {
    double s = 0.0;
    for (double x : p.data()) s += x * x;
    os << ' ' << name << '=' << std::sqrt(s);
  }
  return os.str();
}

std::vector<std::vector<double>> snapshot(const nn::ParameterStore& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, p] : params.entries()) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void restore(nn::ParameterStore& params, const std::vector<std::vector<double>>& saved) {
  auto& entries = params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    std::copy(saved[k].begin(), saved[k].end(), p.mutable_data().begin());
  }
}

// Rows [begin, end) of `data` as a standalone dataset.
WindowedDataset row_range(const WindowedDataset& data, std::size_t begin, std::size_t end) {
  WindowedDataset out;
  out.rows = end - begin;
  out.window = data.window;
  out.horizon = data.horizon;
  out.source_offset = data.source_offset + begin;
  out.inputs.assign(data.inputs.begin() + begin * data.window, data.inputs.begin() + end * data.window);
  out.targets.assign(data.targets.begin() + begin * data.horizon, data.targets.begin() + end * data.horizon);
  return out;
}

}  // namespace

std::vector<double> predict_dataset(const ForecastModel& model, const WindowedDataset& data) {
  constexpr std::size_t chunk = 256;
  std::vector<double> out;
  out.reserve(data.rows * data.horizon);
  for (std::size_t begin = 0; begin < data.rows; begin += chunk) {
    const std::size_t n = std::min(chunk, data.rows - begin);
    const auto part = model.predict_rows(
        std::span<const double>(data.inputs).subspan(begin * data.window, n * data.window), n);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

TrainResult train(ForecastModel& model, const WindowedDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const auto& mc = model.config();
  if (data.rows == 0) throw ContractError("train: empty dataset");
  if (data.window != mc.window || data.horizon != mc.horizon) {
    throw ContractError("train: model expects window " + std::to_string(mc.window) + " and horizon " +
                        std::to_string(mc.horizon) + ", data has " + std::to_string(data.window) + " and " +
                        std::to_string(data.horizon));
  }
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(data.rows)));
  const std::size_t n_train = data.rows - n_val;
  if (n_train == 0) throw ContractError("train: validation split leaves no training rows");
  const WindowedDataset fit_rows = row_range(data, 0, n_train);
  const WindowedDataset val_rows = row_range(data, n_train, data.rows);

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(hash_combine(cfg.seed, 0xd509));
  auto& params = model.parameters();
  Adam adam(params, cfg);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

  TrainResult result;
  result.best_loss = INFINITY;
  auto best = snapshot(params);
  std::size_t since_best = 0;
  const std::size_t w = data.window, h = data.horizon;
  std::vector<double> xb, yb;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t k = 0; k + 1 < n_train; ++k) std::swap(order[k], order[k + uniform_index(order_rng, n_train - k)]);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size, ++batch_index) {
      const std::size_t b = std::min(cfg.batch_size, n_train - begin);
      xb.resize(b * w);
      yb.resize(b * h);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t row = order[begin + r];
        std::copy_n(fit_rows.inputs.begin() + row * w, w, xb.begin() + r * w);
        std::copy_n(fit_rows.targets.begin() + row * h, h, yb.begin() + r * h);
      }
      params.zero_grad();
      const nn::ForwardContext ctx{true, &dropout_rng, 0.0};
      Tensor loss = mse_loss(model.forward(Tensor::from({b, w, 1}, xb), ctx), Tensor::from({b, h}, yb));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + "; parameter norms:" + parameter_norms(params));
      }
      loss.backward();
      clip_gradients(params, cfg.gradient_clip_norm);
      adam.step(params);
      loss_sum += value * static_cast<double>(b);
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(n_train));
    result.epochs_run = epoch;

    double selection = result.train_loss.back();
    if (n_val > 0) {
      selection = mse(val_rows.targets, predict_dataset(model, val_rows));
      result.validation_loss.push_back(selection);
    }
    if (!std::isfinite(selection)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch) +
                          "; parameter norms:" + parameter_norms(params));
    }
    if (cfg.target_train_mse > 0.0 && mse(fit_rows.targets, predict_dataset(model, fit_rows)) < cfg.target_train_mse) {
      result.best_epoch = epoch;
      result.best_loss = selection;
      result.reached_target = true;
      return result;
    }
    if (selection < result.best_loss) {
      result.best_loss = selection;
      result.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return result;
}

}  // namespace tfbench
