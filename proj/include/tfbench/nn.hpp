#pragma once

// Building blocks shared by the forecasting models. Each block registers its
// parameters in a ParameterStore under a dotted name at construction time.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tfbench/attention.hpp"
#include "tfbench/tensor.hpp"

namespace tfbench::nn {

class ParameterStore {
 public:
  // Registers a trainable leaf.
  Tensor add(std::string name, Tensor value);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  const Tensor& get(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
  double dropout = 0.0;
};

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx);

class Linear {
 public:
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  // x: [..., in] -> [..., out]
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gain_;
  Tensor bias_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                     std::mt19937_64& rng);

  // query: [B, L_q, D]; memory: [B, L_k, D]. With `sparse`, ProbSparse
  // selection is used (self-attention only).
  Tensor operator()(const Tensor& query, const Tensor& memory, const std::optional<AttentionMask>& mask,
                    const std::optional<ProbSparseConfig>& sparse) const;

 private:
  std::size_t heads_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

enum class Activation { relu, gelu };

class FeedForward {
 public:
  FeedForward(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t hidden,
              Activation activation, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;

 private:
  Linear in_;
  Linear out_;
  Activation activation_;
};

// Post-norm encoder layer: x = LN(x + SelfAttn(x)); x = LN(x + FFN(x)).
class EncoderLayer {
 public:
  EncoderLayer(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
               std::size_t ffn_dim, Activation activation, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx, const std::optional<ProbSparseConfig>& sparse) const;

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_;
  FeedForward ffn_;
  LayerNorm norm2_;
};

// Post-norm decoder layer with causal self-attention and, when built with
// cross-attention, an encoder-decoder attention sub-layer.
class DecoderLayer {
 public:
  DecoderLayer(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
               std::size_t ffn_dim, Activation activation, bool cross_attention, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const Tensor* memory, const ForwardContext& ctx,
                    const std::optional<ProbSparseConfig>& sparse_self) const;

 private:
  MultiHeadAttention self_attn_;
  LayerNorm norm1_;
  std::optional<MultiHeadAttention> cross_attn_;
  std::optional<LayerNorm> norm_cross_;
  FeedForward ffn_;
  LayerNorm norm2_;
};

// One LSTM layer with input, forget and output gates, unrolled over time.
class LSTMLayer {
 public:
  LSTMLayer(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden,
            std::mt19937_64& rng);
  // x: [B, T, input] -> hidden states [B, T, hidden]
  Tensor operator()(const Tensor& x) const;

 private:
  std::size_t hidden_;
  Tensor w_input_;   // [input, 4H], gate order i, f, g, o
  Tensor w_hidden_;  // [H, 4H]
  Tensor bias_;      // [4H]
};

// Dilated causal 1-D convolution over [B, T, C].
class CausalConv1d {
 public:
  CausalConv1d(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t dilation, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  std::size_t in_channels_;
  std::size_t kernel_;
  std::size_t dilation_;
  Tensor weight_;  // [kernel * in, out]; row block j multiplies x[t - (kernel-1-j) * dilation]
  Tensor bias_;
};

// Residual block of two dilated causal convolutions with ReLU and dropout.
class TemporalBlock {
 public:
  TemporalBlock(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
                std::size_t kernel, std::size_t dilation, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;

 private:
  CausalConv1d conv1_;
  CausalConv1d conv2_;
  std::optional<Linear> downsample_;
};

}  // namespace tfbench::nn
