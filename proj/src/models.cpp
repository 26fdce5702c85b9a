#include "tfbench/models.hpp"

#include <cmath>
#include <sstream>

#include "tfbench/errors.hpp"
#include "tfbench/ops.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

namespace {

struct VariantName {
  Variant variant;
  const char* name;
  const char* id;
};

constexpr VariantName kVariantNames[] = {
    {Variant::EncoderOnly, "EncoderOnly", "encoder_only"},
    {Variant::DecoderOnly, "DecoderOnly", "decoder_only"},
    {Variant::Vanilla, "Vanilla", "vanilla"},
    {Variant::VanillaNoEmbedding, "VanillaNoEmbedding", "vanilla_no_embedding"},
    {Variant::VanillaProbSparse, "VanillaProbSparse", "vanilla_probsparse"},
    {Variant::LSTM, "LSTM", "lstm"},
    {Variant::TCN, "TCN", "tcn"},
};

bool is_transformer(Variant v) { return v != Variant::LSTM && v != Variant::TCN; }

}  // namespace

std::string to_string(Variant v) {
  for (const auto& n : kVariantNames) {
    if (n.variant == v) return n.name;
  }
  return "unknown";
}

std::string variant_id(Variant v) {
  for (const auto& n : kVariantNames) {
    if (n.variant == v) return n.id;
  }
  return "unknown";
}

Variant parse_variant(const std::string& text) {
  for (const auto& n : kVariantNames) {
    if (text == n.name || text == n.id) return n.variant;
  }
  throw ConfigError("unknown model variant '" + text + "'");
}

const std::vector<Variant>& all_neural_variants() {
  static const std::vector<Variant> all = {Variant::EncoderOnly,        Variant::DecoderOnly,
                                           Variant::Vanilla,            Variant::VanillaNoEmbedding,
                                           Variant::VanillaProbSparse,  Variant::LSTM,
                                           Variant::TCN};
  return all;
}

ModelConfig ModelConfig::defaults(Variant variant, std::size_t window, std::size_t horizon, std::uint64_t seed) {
  ModelConfig c;
  c.variant = variant;
  c.window = window;
  c.horizon = horizon;
  c.seed = seed;
  switch (variant) {
    case Variant::EncoderOnly:
      c.n_encoder_layers = 3;
      c.n_decoder_layers = 0;
      break;
    case Variant::DecoderOnly:
      c.n_encoder_layers = 0;
      c.n_decoder_layers = 2;
      break;
    case Variant::Vanilla:
    case Variant::VanillaNoEmbedding:
    case Variant::VanillaProbSparse:
      c.n_encoder_layers = 3;
      c.n_decoder_layers = 2;
      break;
    case Variant::LSTM:
    case Variant::TCN:
      c.n_encoder_layers = 0;
      c.n_decoder_layers = 0;
      break;
  }
  return c;
}

void ModelConfig::validate() const {
  auto fail = [this](const std::string& why) {
    throw ContractError("invalid " + to_string(variant) + " config: " + why);
  };
  if (window == 0) fail("window must be >= 1");
  if (horizon == 0) fail("horizon must be >= 1");
  if (d_model == 0) fail("d_model must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (is_transformer(variant)) {
    if (n_heads == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_model % 2 != 0) fail("d_model must be even for sinusoidal positions");
    if (ffn_dim == 0) fail("ffn_dim must be >= 1");
    const bool needs_encoder = variant != Variant::DecoderOnly;
    const bool needs_decoder = variant != Variant::EncoderOnly;
    if (needs_encoder && n_encoder_layers == 0) fail("needs at least one encoder layer");
    if (needs_decoder && n_decoder_layers == 0) fail("needs at least one decoder layer");
    if (!(sparse_sample_factor > 0.0) || !(sparse_top_factor > 0.0)) fail("sparse factors must be positive");
  }
  if (variant == Variant::LSTM && lstm_layers == 0) fail("needs at least one LSTM layer");
  if (variant == Variant::TCN && (tcn_blocks == 0 || tcn_kernel == 0)) fail("needs blocks and kernel >= 1");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"variant", to_string(variant)},
      {"d_model", std::to_string(d_model)},
      {"n_heads", std::to_string(n_heads)},
      {"n_encoder_layers", std::to_string(n_encoder_layers)},
      {"n_decoder_layers", std::to_string(n_decoder_layers)},
      {"ffn_dim", std::to_string(ffn_dim)},
      {"dropout", num(dropout)},
      {"horizon", std::to_string(horizon)},
      {"window", std::to_string(window)},
      {"seed", std::to_string(seed)},
      {"activation", activation == nn::Activation::relu ? "relu" : "gelu"},
      {"encoder_pooling", encoder_pooling == Pooling::Mean ? "mean" : "last"},
      {"no_embedding_keeps_positions", no_embedding_keeps_positions ? "1" : "0"},
      {"sparse_decoder_self_attention", sparse_decoder_self_attention ? "1" : "0"},
      {"sparse_sample_factor", num(sparse_sample_factor)},
      {"sparse_top_factor", num(sparse_top_factor)},
      {"lstm_layers", std::to_string(lstm_layers)},
      {"tcn_blocks", std::to_string(tcn_blocks)},
      {"tcn_kernel", std::to_string(tcn_kernel)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& values) {
  // False for `no`, true for `yes`, anything else is rejected.
  auto choose = [](const std::string& value, const char* no, const char* yes) {
    if (value == no) return false;
    if (value == yes) return true;
    throw std::invalid_argument(value);
  };
  ModelConfig c;
  for (const auto& [key, value] : values) {
    try {
      if (key == "variant") c.variant = parse_variant(value);
      else if (key == "d_model") c.d_model = std::stoul(value);
      else if (key == "n_heads") c.n_heads = std::stoul(value);
      else if (key == "n_encoder_layers") c.n_encoder_layers = std::stoul(value);
      else if (key == "n_decoder_layers") c.n_decoder_layers = std::stoul(value);
      else if (key == "ffn_dim") c.ffn_dim = std::stoul(value);
      else if (key == "dropout") c.dropout = std::stod(value);
      else if (key == "horizon") c.horizon = std::stoul(value);
      else if (key == "window") c.window = std::stoul(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "activation") c.activation = choose(value, "relu", "gelu") ? nn::Activation::gelu : nn::Activation::relu;
      else if (key == "encoder_pooling") c.encoder_pooling = choose(value, "mean", "last") ? Pooling::Last : Pooling::Mean;
      else if (key == "no_embedding_keeps_positions") c.no_embedding_keeps_positions = choose(value, "0", "1");
      else if (key == "sparse_decoder_self_attention") c.sparse_decoder_self_attention = choose(value, "0", "1");
      else if (key == "sparse_sample_factor") c.sparse_sample_factor = std::stod(value);
      else if (key == "sparse_top_factor") c.sparse_top_factor = std::stod(value);
      else if (key == "lstm_layers") c.lstm_layers = std::stoul(value);
      else if (key == "tcn_blocks") c.tcn_blocks = std::stoul(value);
      else if (key == "tcn_kernel") c.tcn_kernel = std::stoul(value);
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value '" + value + "' for model config key '" + key + "'");
    }
  }
  return c;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (length == 0 || d_model == 0) throw ContractError("positional_encoding needs positive sizes");
  if (d_model % 2 != 0) throw ContractError("positional_encoding needs an even d_model");
  std::vector<double> values(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      values[pos * d_model + 2 * i] = std::sin(angle);
      values[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, d_model}, std::move(values));
}

std::uint64_t ForecastModel::sparse_seed(const nn::ForwardContext& ctx) const {
  if (ctx.training && ctx.rng != nullptr) return (*ctx.rng)();
  return hash_combine(config_.seed, 0x5ba75e);
}

Tensor ForecastModel::sequence_states(const Tensor&, const nn::ForwardContext&) const {
  throw ContractError(to_string(config_.variant) + " does not expose per-position states");
}

std::vector<double> ForecastModel::predict(std::span<const double> window) const {
  return predict_rows(window, 1);
}

std::vector<double> ForecastModel::predict_rows(std::span<const double> rows, std::size_t n) const {
  const std::size_t w = config_.window;
  if (n == 0) return {};
  if (rows.size() != n * w) {
    throw ContractError("predict expects windows of length " + std::to_string(w) + ", got " +
                        std::to_string(rows.size()) + " values for " + std::to_string(n) + " rows");
  }
  NoGradGuard no_grad;
  const Tensor x = Tensor::from({n, w, 1}, std::vector<double>(rows.begin(), rows.end()));
  const Tensor y = forward(x, nn::ForwardContext{});
  return std::vector<double>(y.data().begin(), y.data().end());
}

namespace {

void check_windows(const Tensor& windows, const ModelConfig& c) {
  if (windows.dim() != 3 || windows.size(1) != c.window || windows.size(2) != 1) {
    throw ShapeError("model expects input [B, " + std::to_string(c.window) + ", 1], got " +
                        shape_str(windows.shape()));
  }
}

nn::ForwardContext with_dropout(nn::ForwardContext ctx, double p) {
  ctx.dropout = p;
  return ctx;
}

// [B, L, D] -> [B, D] at position `pos`.
Tensor take_position(const Tensor& x, std::size_t pos) {
  return reshape(slice(x, 1, pos, 1), {x.size(0), x.size(2)});
}

class EncoderOnlyModel final : public ForecastModel {
 public:
  explicit EncoderOnlyModel(const ModelConfig& c) : ForecastModel(c) {
    std::mt19937_64 rng(c.seed);
    embed_.emplace(params_, "embed", 1, c.d_model, rng);
    for (std::size_t l = 0; l < c.n_encoder_layers; ++l) {
      layers_.emplace_back(params_, "encoder." + std::to_string(l), c.d_model, c.n_heads, c.ffn_dim, c.activation, rng);
    }
    head_.emplace(params_, "head", c.d_model, c.horizon, rng);
    positions_ = positional_encoding(c.window, c.d_model);
  }

  Tensor forward(const Tensor& windows, const nn::ForwardContext& base) const override {
    check_windows(windows, config_);
    const auto ctx = with_dropout(base, config_.dropout);
    Tensor x = nn::maybe_dropout(add((*embed_)(windows), positions_), ctx);
    for (const auto& layer : layers_) x = layer(x, ctx, std::nullopt);
    const Tensor pooled =
        config_.encoder_pooling == Pooling::Mean ? mean_axis(x, 1) : take_position(x, config_.window - 1);
    return (*head_)(pooled);
  }

 private:
  std::optional<nn::Linear> embed_;
  std::vector<nn::EncoderLayer> layers_;
  std::optional<nn::Linear> head_;
  Tensor positions_;
};

class DecoderOnlyModel final : public ForecastModel {
 public:
  explicit DecoderOnlyModel(const ModelConfig& c) : ForecastModel(c) {
    std::mt19937_64 rng(c.seed);
    embed_.emplace(params_, "embed", 1, c.d_model, rng);
    for (std::size_t l = 0; l < c.n_decoder_layers; ++l) {
      layers_.emplace_back(params_, "decoder." + std::to_string(l), c.d_model, c.n_heads, c.ffn_dim, c.activation,
                           false, rng);
    }
    head_.emplace(params_, "head", c.d_model, c.horizon, rng);
    positions_ = positional_encoding(c.window, c.d_model);
  }

  Tensor forward(const Tensor& windows, const nn::ForwardContext& base) const override {
    check_windows(windows, config_);
    const auto ctx = with_dropout(base, config_.dropout);
    return (*head_)(take_position(sequence_states(windows, ctx), config_.window - 1));
  }

  Tensor sequence_states(const Tensor& windows, const nn::ForwardContext& ctx) const override {
    check_windows(windows, config_);
    Tensor x = nn::maybe_dropout(add((*embed_)(windows), positions_), ctx);
    for (const auto& layer : layers_) x = layer(x, nullptr, ctx, std::nullopt);
    return x;
  }

 private:
  std::optional<nn::Linear> embed_;
  std::vector<nn::DecoderLayer> layers_;
  std::optional<nn::Linear> head_;
  Tensor positions_;
};

// Encoder-decoder family: Vanilla, VanillaNoEmbedding, VanillaProbSparse.
class EncoderDecoderModel final : public ForecastModel {
 public:
  explicit EncoderDecoderModel(const ModelConfig& c) : ForecastModel(c) {
    std::mt19937_64 rng(c.seed);
    const bool embedded = c.variant != Variant::VanillaNoEmbedding;
    if (embedded) {
      enc_embed_.emplace(params_, "encoder_embed", 1, c.d_model, rng);
      dec_embed_.emplace(params_, "decoder_embed", 1, c.d_model, rng);
    }
    for (std::size_t l = 0; l < c.n_encoder_layers; ++l) {
      encoder_.emplace_back(params_, "encoder." + std::to_string(l), c.d_model, c.n_heads, c.ffn_dim, c.activation,
                            rng);
    }
    for (std::size_t l = 0; l < c.n_decoder_layers; ++l) {
      decoder_.emplace_back(params_, "decoder." + std::to_string(l), c.d_model, c.n_heads, c.ffn_dim, c.activation,
                            true, rng);
    }
    head_.emplace(params_, "head", c.d_model, 1, rng);
    use_positions_ = embedded || c.no_embedding_keeps_positions;
    enc_positions_ = positional_encoding(c.window, c.d_model);
    dec_positions_ = positional_encoding(c.horizon, c.d_model);
    tile_ = Tensor::ones({1, c.d_model});
  }

  Tensor forward(const Tensor& windows, const nn::ForwardContext& base) const override {
    check_windows(windows, config_);
    const auto ctx = with_dropout(base, config_.dropout);
    const std::size_t batch = windows.size(0);
    const std::size_t h = config_.horizon;

    std::optional<ProbSparseConfig> sparse;
    if (config_.variant == Variant::VanillaProbSparse) {
      sparse = ProbSparseConfig{config_.sparse_sample_factor, config_.sparse_top_factor, sparse_seed(base)};
    }

    Tensor memory = nn::maybe_dropout(embed(windows, enc_embed_, enc_positions_), ctx);
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      std::optional<ProbSparseConfig> layer_sparse = sparse;
      if (layer_sparse) layer_sparse->rng_seed = hash_combine(sparse->rng_seed, l);
      memory = encoder_[l](memory, ctx, layer_sparse);
    }

    // Decoder consumes h copies of the last observed value.
    const Tensor last = slice(windows, 1, config_.window - 1, 1);
    const Tensor dec_in = h == 1 ? last : concat(std::vector<Tensor>(h, last), 1);
    Tensor x = nn::maybe_dropout(embed(dec_in, dec_embed_, dec_positions_), ctx);
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      std::optional<ProbSparseConfig> self_sparse;
      if (sparse && config_.sparse_decoder_self_attention) {
        self_sparse = sparse;
        self_sparse->rng_seed = hash_combine(sparse->rng_seed, 1000 + l);
      }
      x = decoder_[l](x, &memory, ctx, self_sparse);
    }
    return reshape((*head_)(x), {batch, h});
  }

 private:
  Tensor embed(const Tensor& values, const std::optional<nn::Linear>& projection, const Tensor& positions) const {
    // Without a learned projection the scalar is tiled across the width.
    Tensor x = projection ? (*projection)(values) : matmul(values, tile_);
    return use_positions_ ? add(x, positions) : x;
  }

  std::optional<nn::Linear> enc_embed_;
  std::optional<nn::Linear> dec_embed_;
  std::vector<nn::EncoderLayer> encoder_;
  std::vector<nn::DecoderLayer> decoder_;
  std::optional<nn::Linear> head_;
  bool use_positions_ = true;
  Tensor enc_positions_;
  Tensor dec_positions_;
  Tensor tile_;
};

class LSTMModel final : public ForecastModel {
 public:
  explicit LSTMModel(const ModelConfig& c) : ForecastModel(c) {
    std::mt19937_64 rng(c.seed);
    for (std::size_t l = 0; l < c.lstm_layers; ++l) {
      layers_.emplace_back(params_, "lstm." + std::to_string(l), l == 0 ? 1 : c.d_model, c.d_model, rng);
    }
    head_.emplace(params_, "head", c.d_model, c.horizon, rng);
  }

  Tensor forward(const Tensor& windows, const nn::ForwardContext& base) const override {
    check_windows(windows, config_);
    const auto ctx = with_dropout(base, config_.dropout);
    const Tensor x = sequence_states(windows, ctx);
    return (*head_)(nn::maybe_dropout(take_position(x, config_.window - 1), ctx));
  }

  Tensor sequence_states(const Tensor& windows, const nn::ForwardContext& ctx) const override {
    check_windows(windows, config_);
    Tensor x = windows;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      x = layers_[l](x);
      if (l + 1 < layers_.size()) x = nn::maybe_dropout(x, ctx);
    }
    return x;
  }

 private:
  std::vector<nn::LSTMLayer> layers_;
  std::optional<nn::Linear> head_;
};

class TCNModel final : public ForecastModel {
 public:
  explicit TCNModel(const ModelConfig& c) : ForecastModel(c) {
    std::mt19937_64 rng(c.seed);
    std::size_t dilation = 1;
    for (std::size_t b = 0; b < c.tcn_blocks; ++b) {
      blocks_.emplace_back(params_, "block." + std::to_string(b), b == 0 ? 1 : c.d_model, c.d_model, c.tcn_kernel,
                           dilation, rng);
      dilation *= 2;
    }
    head_.emplace(params_, "head", c.d_model, c.horizon, rng);
  }

  Tensor forward(const Tensor& windows, const nn::ForwardContext& base) const override {
    check_windows(windows, config_);
    const auto ctx = with_dropout(base, config_.dropout);
    return (*head_)(take_position(sequence_states(windows, ctx), config_.window - 1));
  }

  Tensor sequence_states(const Tensor& windows, const nn::ForwardContext& ctx) const override {
    check_windows(windows, config_);
    Tensor x = windows;
    for (const auto& block : blocks_) x = block(x, ctx);
    return x;
  }

 private:
  std::vector<nn::TemporalBlock> blocks_;
  std::optional<nn::Linear> head_;
};

}  // namespace

std::unique_ptr<ForecastModel> build_model(const ModelConfig& config) {
  config.validate();
  switch (config.variant) {
    case Variant::EncoderOnly:
      return std::make_unique<EncoderOnlyModel>(config);
    case Variant::DecoderOnly:
      return std::make_unique<DecoderOnlyModel>(config);
    case Variant::Vanilla:
    case Variant::VanillaNoEmbedding:
    case Variant::VanillaProbSparse:
      return std::make_unique<EncoderDecoderModel>(config);
    case Variant::LSTM:
      return std::make_unique<LSTMModel>(config);
    case Variant::TCN:
      return std::make_unique<TCNModel>(config);
  }
  throw ContractError("unknown variant");
}

void copy_parameters(const ForecastModel& from, ForecastModel& to) {
  const auto& src = from.parameters().entries();
  const auto& dst = to.parameters().entries();
  if (src.size() != dst.size()) throw ContractError("copy_parameters: models differ in structure");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw ContractError("copy_parameters: parameter " + src[i].first + " does not match");
    }
    Tensor target = dst[i].second;
    auto values = target.mutable_data();
    std::copy(src[i].second.data().begin(), src[i].second.data().end(), values.begin());
  }
}

}  // namespace tfbench
