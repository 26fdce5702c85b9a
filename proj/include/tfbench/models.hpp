#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfbench/attention.hpp"
#include "tfbench/nn.hpp"
#include "tfbench/tensor.hpp"

namespace tfbench {

enum class Variant { EncoderOnly, DecoderOnly, Vanilla, VanillaNoEmbedding, VanillaProbSparse, LSTM, TCN };

std::string to_string(Variant v);
// Accepts the enum spelling ("DecoderOnly") or the short id ("decoder_only").
Variant parse_variant(const std::string& text);
// Short identifier used in run directories and tables.
std::string variant_id(Variant v);
const std::vector<Variant>& all_neural_variants();

enum class Pooling { Mean, Last };

struct ModelConfig {
  Variant variant = Variant::Vanilla;
  std::size_t d_model = 64;
  std::size_t n_heads = 8;
  std::size_t n_encoder_layers = 3;
  std::size_t n_decoder_layers = 2;
  std::size_t ffn_dim = 256;
  double dropout = 0.1;
  std::size_t horizon = 1;
  std::size_t window = 10;
  std::uint64_t seed = 0;

  nn::Activation activation = nn::Activation::relu;
  // EncoderOnly head input: mean over time or the last position.
  Pooling encoder_pooling = Pooling::Mean;
  // VanillaNoEmbedding: keep sinusoidal positions even without the learned
  // input projection.
  bool no_embedding_keeps_positions = false;
  // VanillaProbSparse: also sparsify decoder self-attention. Cross-attention
  // always stays full.
  bool sparse_decoder_self_attention = false;
  double sparse_sample_factor = 5.0;
  double sparse_top_factor = 5.0;
  std::size_t lstm_layers = 2;
  std::size_t tcn_blocks = 4;
  std::size_t tcn_kernel = 3;

  // Standard layer counts for the variant, all else default.
  static ModelConfig defaults(Variant variant, std::size_t window, std::size_t horizon, std::uint64_t seed = 0);

  // Throws ContractError on an invalid configuration.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& values);
};

// Sinusoidal positions: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(...).
Tensor positional_encoding(std::size_t length, std::size_t d_model);

class ForecastModel {
 public:
  virtual ~ForecastModel() = default;
  ForecastModel(const ForecastModel&) = delete;
  ForecastModel& operator=(const ForecastModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const nn::ParameterStore& parameters() const { return params_; }
  nn::ParameterStore& parameters() { return params_; }

  // windows: [B, w, 1] normalized inputs -> [B, h].
  virtual Tensor forward(const Tensor& windows, const nn::ForwardContext& ctx) const = 0;

  // Per-position representation [B, w, D] feeding the head, for the
  // sequence-to-state variants (DecoderOnly, LSTM, TCN). Others throw.
  virtual Tensor sequence_states(const Tensor& windows, const nn::ForwardContext& ctx) const;

  // Inference on one window; dropout off, no graph recorded.
  std::vector<double> predict(std::span<const double> window) const;
  // Inference on a batch of rows laid out [n, w]; returns [n, h] row-major.
  std::vector<double> predict_rows(std::span<const double> rows, std::size_t n) const;

 protected:
  explicit ForecastModel(ModelConfig config) : config_(std::move(config)) {}

  // Seed for ProbSparse key sampling: drawn from the training rng, or fixed
  // at inference so predictions are repeatable.
  std::uint64_t sparse_seed(const nn::ForwardContext& ctx) const;

  ModelConfig config_;
  nn::ParameterStore params_;
};

std::unique_ptr<ForecastModel> build_model(const ModelConfig& config);

// Copies parameter values between two models of identical configuration.
void copy_parameters(const ForecastModel& from, ForecastModel& to);

}  // namespace tfbench
