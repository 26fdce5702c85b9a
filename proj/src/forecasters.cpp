#include "tfbench/forecasters.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "tfbench/errors.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

const std::vector<ModelInfo>& model_catalog() {
  static const std::vector<ModelInfo> models = {
      {"encoder_only", "Encoder-only", Variant::EncoderOnly},
      {"decoder_only", "Decoder-only", Variant::DecoderOnly},
      {"vanilla", "Vanilla", Variant::Vanilla},
      {"vanilla_no_embedding", "Vanilla (no embedding)", Variant::VanillaNoEmbedding},
      {"vanilla_probsparse", "Vanilla (ProbSparse)", Variant::VanillaProbSparse},
      {"lstm", "LSTM", Variant::LSTM},
      {"tcn", "TCN", Variant::TCN},
      {"svr", "SVR", std::nullopt},
      {"random_forest", "Random Forest", std::nullopt},
  };
  return models;
}

std::size_t model_rank(const std::string& id) {
  const auto& models = model_catalog();
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].id == id) return i;
  }
  std::string known;
  for (const auto& m : models) known += (known.empty() ? "" : ", ") + m.id;
  throw ConfigError("unknown model '" + id + "' (known: " + known + ")");
}

const ModelInfo& model_info(const std::string& id) { return model_catalog()[model_rank(id)]; }

namespace {

std::string exact(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::size_t meta_count(const Checkpoint& ckpt, const std::string& key) {
  const std::string& text = ckpt.meta(key);
  std::size_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ParseError("checkpoint metadata '" + key + "' is not a count: '" + text + "'");
  }
  return v;
}

double meta_real(const Checkpoint& ckpt, const std::string& key) {
  const std::string& text = ckpt.meta(key);
  double v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ParseError("checkpoint metadata '" + key + "' is not a number: '" + text + "'");
  }
  return v;
}

// Rows relative to their last input value.
WindowedDataset relative_to_last(const WindowedDataset& data, bool with_targets) {
  WindowedDataset out = data;
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double last = data.input_row(i).back();
    for (std::size_t j = 0; j < data.window; ++j) out.inputs[i * data.window + j] -= last;
    if (with_targets) {
      for (std::size_t k = 0; k < data.horizon; ++k) out.targets[i * data.horizon + k] -= last;
    }
  }
  return out;
}

CheckpointArray vector_array(std::vector<double> values) {
  CheckpointArray a;
  a.shape = {values.size()};
  a.values = std::move(values);
  return a;
}

const CheckpointArray& shaped(const Checkpoint& ckpt, const std::string& name, std::size_t rank) {
  const auto& a = ckpt.array(name);
  if (a.shape.size() != rank) throw ParseError("checkpoint array '" + name + "' has the wrong rank");
  return a;
}

class NeuralForecaster : public Forecaster {
 public:
  NeuralForecaster(std::string id, const ModelConfig& config, const TrainConfig& train, bool anchor)
      : Forecaster(std::move(id), config.window, config.horizon, anchor), model_(build_model(config)), train_(train) {}

  ForecastModel& model() { return *model_; }

 protected:
  TrainResult fit_rows(const WindowedDataset& data) override { return tfbench::train(*model_, data, train_); }

  std::vector<double> predict_rows(const WindowedDataset& data) const override {
    return predict_dataset(*model_, data);
  }

  void save_state(Checkpoint& ckpt) const override {
    for (const auto& [key, value] : model_->config().to_map()) ckpt.metadata["model." + key] = value;
    for (const auto& [key, value] : train_.to_map()) ckpt.metadata["train." + key] = value;
    for (const auto& [name, p] : model_->parameters().entries()) {
      CheckpointArray a;
      a.shape.assign(p.shape().begin(), p.shape().end());
      a.values.assign(p.data().begin(), p.data().end());
      ckpt.arrays["param." + name] = std::move(a);
    }
  }

 private:
  std::unique_ptr<ForecastModel> model_;
  TrainConfig train_;
};

MatrixView rows_view(const WindowedDataset& data) { return MatrixView(data.inputs, data.rows, data.window); }

class SVRForecaster : public Forecaster {
 public:
  SVRForecaster(std::size_t window, std::size_t horizon, const SVRParams& params, bool anchor)
      : Forecaster("svr", window, horizon, anchor), params_(params) {}

  std::vector<SVRModel> models;

 protected:
  TrainResult fit_rows(const WindowedDataset& data) override {
    models = fit_svr_columns(rows_view(data), MatrixView(data.targets, data.rows, data.horizon), params_);
    return {};
  }

  std::vector<double> predict_rows(const WindowedDataset& data) const override {
    std::vector<double> out(data.rows * data.horizon);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto col = predict_classical(models[k], rows_view(data));
      for (std::size_t i = 0; i < data.rows; ++i) out[i * data.horizon + k] = col[i];
    }
    return out;
  }

  void save_state(Checkpoint& ckpt) const override {
    ckpt.metadata["svr.tolerance"] = exact(params_.tolerance);
    ckpt.metadata["svr.max_iterations"] = std::to_string(params_.max_iterations);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto& m = models[k];
      const std::string p = "svr." + std::to_string(k) + ".";
      CheckpointArray sv;
      sv.shape = {m.support_count(), m.width};
      sv.values = m.support_vectors;
      ckpt.arrays[p + "support_vectors"] = std::move(sv);
      ckpt.arrays[p + "coefficients"] = vector_array(m.dual_coefficients);
      ckpt.arrays[p + "support_indices"] =
          vector_array(std::vector<double>(m.support_indices.begin(), m.support_indices.end()));
      ckpt.arrays[p + "scalars"] =
          vector_array({m.bias, m.gamma, m.C, m.epsilon, static_cast<double>(m.iterations)});
    }
  }

 private:
  SVRParams params_;
};

class ForestForecaster : public Forecaster {
 public:
  ForestForecaster(std::size_t window, std::size_t horizon, const ForestParams& params, bool anchor)
      : Forecaster("random_forest", window, horizon, anchor), params_(params) {}

  std::vector<RFModel> models;

 protected:
  TrainResult fit_rows(const WindowedDataset& data) override {
    models.clear();
    for (std::size_t k = 0; k < data.horizon; ++k) {
      std::vector<double> y(data.rows);
      for (std::size_t i = 0; i < data.rows; ++i) y[i] = data.targets[i * data.horizon + k];
      ForestParams p = params_;
      p.seed = hash_combine(params_.seed, k);
      models.push_back(fit_random_forest(rows_view(data), y, p));
    }
    return {};
  }

  std::vector<double> predict_rows(const WindowedDataset& data) const override {
    std::vector<double> out(data.rows * data.horizon);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto col = predict_classical(models[k], rows_view(data));
      for (std::size_t i = 0; i < data.rows; ++i) out[i * data.horizon + k] = col[i];
    }
    return out;
  }

  void save_state(Checkpoint& ckpt) const override {
    ckpt.metadata["rf.n_trees"] = std::to_string(params_.n_trees);
    ckpt.metadata["rf.max_depth"] = std::to_string(params_.max_depth);
    ckpt.metadata["rf.min_leaf"] = std::to_string(params_.min_leaf);
    ckpt.metadata["rf.max_features"] = std::to_string(params_.max_features);
    ckpt.metadata["rf.bootstrap"] = params_.bootstrap ? "1" : "0";
    ckpt.metadata["rf.seed"] = std::to_string(params_.seed);
    for (std::size_t k = 0; k < models.size(); ++k) {
      for (std::size_t t = 0; t < models[k].trees.size(); ++t) {
        const auto& nodes = models[k].trees[t].nodes;
        CheckpointArray a;
        a.shape = {nodes.size(), kNodeFields};
        for (const auto& n : nodes) {
          a.values.insert(a.values.end(), {static_cast<double>(n.feature), n.threshold, n.value,
                                           static_cast<double>(n.left), static_cast<double>(n.right),
                                           static_cast<double>(n.samples), static_cast<double>(n.depth)});
        }
        ckpt.arrays["rf." + std::to_string(k) + "." + std::to_string(t)] = std::move(a);
      }
    }
  }

 public:
  static constexpr std::size_t kNodeFields = 7;

 private:
  ForestParams params_;
};

}  // namespace

TrainResult Forecaster::fit(const WindowedDataset& train) {
  if (train.window != window_ || train.horizon != horizon_) {
    throw ContractError("forecaster " + id_ + " expects window " + std::to_string(window_) + " and horizon " +
                        std::to_string(horizon_));
  }
  if (train.rows == 0) throw ContractError("forecaster " + id_ + ": empty training set");
  return fit_rows(anchor_ ? relative_to_last(train, true) : train);
}

std::vector<double> Forecaster::predict(const WindowedDataset& data) const {
  if (data.window != window_) {
    throw ContractError("forecaster " + id_ + " expects window " + std::to_string(window_) + ", got " +
                        std::to_string(data.window));
  }
  if (data.rows == 0) return {};
  if (!anchor_) return predict_rows(data);
  auto out = predict_rows(relative_to_last(data, false));
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double last = data.input_row(i).back();
    for (std::size_t k = 0; k < horizon_; ++k) out[i * horizon_ + k] += last;
  }
  return out;
}

Checkpoint Forecaster::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.metadata["model"] = id_;
  ckpt.metadata["window"] = std::to_string(window_);
  ckpt.metadata["horizon"] = std::to_string(horizon_);
  ckpt.metadata["anchor"] = anchor_ ? "1" : "0";
  save_state(ckpt);
  return ckpt;
}

std::unique_ptr<Forecaster> make_forecaster(const std::string& id, std::size_t window, std::size_t horizon,
                                            std::uint64_t seed, const ForecasterOptions& options) {
  const ModelInfo& info = model_info(id);
  if (info.variant) {
    auto values = ModelConfig::defaults(*info.variant, window, horizon, seed).to_map();
    for (const auto& [key, value] : options.model_overrides) {
      if (key == "variant" || key == "window" || key == "horizon" || key == "seed") {
        throw ConfigError("model key '" + key + "' is set by the grid and cannot be overridden");
      }
      values[key] = value;
    }
    const ModelConfig config = ModelConfig::from_map(values);
    config.validate();
    TrainConfig train = options.train;
    train.seed = hash_combine(seed, 0x7a11);
    return std::make_unique<NeuralForecaster>(id, config, train, options.anchor);
  }
  if (id == "svr") return std::make_unique<SVRForecaster>(window, horizon, options.svr, options.anchor);
  ForestParams forest = options.forest;
  forest.seed = seed;
  return std::make_unique<ForestForecaster>(window, horizon, forest, options.anchor);
}

std::unique_ptr<Forecaster> load_forecaster(const Checkpoint& ckpt) {
  const std::string id = ckpt.meta("model");
  const ModelInfo* info = nullptr;
  try {
    info = &model_info(id);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  const std::size_t window = meta_count(ckpt, "window");
  const std::size_t horizon = meta_count(ckpt, "horizon");
  const bool anchor = ckpt.meta("anchor") == "1";

  if (info->variant) {
    std::map<std::string, std::string> model_values, train_values;
    for (const auto& [key, value] : ckpt.metadata) {
      if (key.starts_with("model.")) model_values[key.substr(6)] = value;
      if (key.starts_with("train.")) train_values[key.substr(6)] = value;
    }
    ModelConfig config;
    TrainConfig train;
    try {
      config = ModelConfig::from_map(model_values);
      config.validate();
      train = TrainConfig::from_map(train_values);
    } catch (const Error& e) {
      throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (config.variant != *info->variant || config.window != window || config.horizon != horizon) {
      throw ParseError("checkpoint: model configuration disagrees with its identity metadata");
    }
    auto f = std::make_unique<NeuralForecaster>(id, config, train, anchor);
    for (const auto& [name, p] : f->model().parameters().entries()) {
      const auto& a = ckpt.array("param." + name);
      if (!std::equal(a.shape.begin(), a.shape.end(), p.shape().begin(), p.shape().end())) {
        throw ParseError("checkpoint: parameter '" + name + "' has shape " + shape_str({a.shape.begin(), a.shape.end()}) +
                         ", model expects " + shape_str(p.shape()));
      }
      Tensor t = p;
      std::copy(a.values.begin(), a.values.end(), t.mutable_data().begin());
    }
    return f;
  }

  if (id == "svr") {
    SVRParams params;
    params.tolerance = meta_real(ckpt, "svr.tolerance");
    params.max_iterations = meta_count(ckpt, "svr.max_iterations");
    auto f = std::make_unique<SVRForecaster>(window, horizon, params, anchor);
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::string p = "svr." + std::to_string(k) + ".";
      SVRModel m;
      m.width = window;
      const auto& sv = shaped(ckpt, p + "support_vectors", 2);
      const auto& coef = shaped(ckpt, p + "coefficients", 1);
      const auto& idx = shaped(ckpt, p + "support_indices", 1);
      const auto& sc = shaped(ckpt, p + "scalars", 1);
      if (sv.shape[1] != window || sv.shape[0] != coef.values.size() || idx.values.size() != coef.values.size() ||
          sc.values.size() != 5) {
        throw ParseError("checkpoint: inconsistent SVR arrays for step " + std::to_string(k));
      }
      m.support_vectors = sv.values;
      m.dual_coefficients = coef.values;
      for (double v : idx.values) m.support_indices.push_back(static_cast<std::size_t>(v));
      m.bias = sc.values[0];
      m.gamma = sc.values[1];
      m.C = sc.values[2];
      m.epsilon = sc.values[3];
      m.iterations = static_cast<std::size_t>(sc.values[4]);
      f->models.push_back(std::move(m));
    }
    return f;
  }

  ForestParams params;
  params.n_trees = meta_count(ckpt, "rf.n_trees");
  params.max_depth = meta_count(ckpt, "rf.max_depth");
  params.min_leaf = meta_count(ckpt, "rf.min_leaf");
  params.max_features = meta_count(ckpt, "rf.max_features");
  params.bootstrap = ckpt.meta("rf.bootstrap") == "1";
  params.seed = meta_count(ckpt, "rf.seed");
  auto f = std::make_unique<ForestForecaster>(window, horizon, params, anchor);
  for (std::size_t k = 0; k < horizon; ++k) {
    RFModel m;
    m.width = window;
    m.params = params;
    m.params.seed = hash_combine(params.seed, k);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
      const auto& a = shaped(ckpt, "rf." + std::to_string(k) + "." + std::to_string(t), 2);
      if (a.shape[1] != ForestForecaster::kNodeFields || a.shape[0] == 0) {
        throw ParseError("checkpoint: malformed tree " + std::to_string(t) + " for step " + std::to_string(k));
      }
      RegressionTree tree;
      const auto n_nodes = static_cast<double>(a.shape[0]);
      for (std::size_t r = 0; r < a.shape[0]; ++r) {
        const double* v = a.values.data() + r * ForestForecaster::kNodeFields;
        TreeNode n;
        n.feature = static_cast<int>(v[0]);
        n.threshold = v[1];
        n.value = v[2];
        n.left = static_cast<int>(v[3]);
        n.right = static_cast<int>(v[4]);
        n.samples = static_cast<std::size_t>(v[5]);
        n.depth = static_cast<std::size_t>(v[6]);
        const bool leaf = n.feature < 0;
        if (!leaf && (v[0] >= static_cast<double>(window) || v[3] <= r || v[4] <= r || v[3] >= n_nodes ||
                      v[4] >= n_nodes)) {
          throw ParseError("checkpoint: tree " + std::to_string(t) + " has an invalid node " + std::to_string(r));
        }
        tree.nodes.push_back(n);
      }
      m.trees.push_back(std::move(tree));
    }
    f->models.push_back(std::move(m));
  }
  return f;
}

}  // namespace tfbench
