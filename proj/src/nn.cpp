#include "tfbench/nn.hpp"

#include <cmath>

#include "tfbench/errors.hpp"
#include "tfbench/ops.hpp"
#include "tfbench/random.hpp"

namespace tfbench::nn {

Tensor ParameterStore::add(std::string name, Tensor value) {
  for (const auto& [existing, _] : entries_) {
    if (existing == name) throw ContractError("duplicate parameter name " + name);
  }
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), value);
  return value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named " + name);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [_, t] : entries_) total += t.numel();
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = uniform(rng, -limit, limit);
  return Tensor::from(shape, std::move(values));
}

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("training forward pass with dropout needs an rng");
  return dropout(x, ctx.dropout, *ctx.rng);
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng)
    : weight_(store.add(name + ".weight", glorot_uniform({in, out}, in, out, rng))),
      bias_(store.add(name + ".bias", Tensor::zeros({out}))) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight_), bias_); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width)
    : gain_(store.add(name + ".gain", Tensor::ones({width}))),
      bias_(store.add(name + ".bias", Tensor::zeros({width}))) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_, 1e-5); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model,
                                       std::size_t heads, std::mt19937_64& rng)
    : heads_(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) +
                        " heads");
  }
  auto proj = [&](const char* tag, Tensor& w, Tensor& b) {
    w = store.add(name + "." + tag + ".weight", glorot_uniform({d_model, d_model}, d_model, d_model, rng));
    b = store.add(name + "." + tag + ".bias", Tensor::zeros({d_model}));
  };
  proj("query", wq_, bq_);
  proj("key", wk_, bk_);
  proj("value", wv_, bv_);
  proj("out", wo_, bo_);
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                      const std::optional<AttentionMask>& mask,
                                      const std::optional<ProbSparseConfig>& sparse) const {
  AttentionInputs in{add(matmul(query, wq_), bq_), add(matmul(memory, wk_), bk_), add(matmul(memory, wv_), bv_),
                     heads_, mask, wo_, bo_};
  return sparse ? probsparse_attention(in, *sparse) : full_attention(in);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t hidden,
                         Activation activation, std::mt19937_64& rng)
    : in_(store, name + ".in", d_model, hidden, rng),
      out_(store, name + ".out", hidden, d_model, rng),
      activation_(activation) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = in_(x);
  h = activation_ == Activation::relu ? relu(h) : gelu(h);
  return out_(maybe_dropout(h, ctx));
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                           std::size_t ffn_dim, Activation activation, std::mt19937_64& rng)
    : attn_(store, name + ".self_attn", d_model, heads, rng),
      norm1_(store, name + ".norm1", d_model),
      ffn_(store, name + ".ffn", d_model, ffn_dim, activation, rng),
      norm2_(store, name + ".norm2", d_model) {}

Tensor EncoderLayer::operator()(const Tensor& x, const ForwardContext& ctx,
                                const std::optional<ProbSparseConfig>& sparse) const {
  Tensor y = norm1_(add(x, maybe_dropout(attn_(x, x, std::nullopt, sparse), ctx)));
  return norm2_(add(y, maybe_dropout(ffn_(y, ctx), ctx)));
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads,
                           std::size_t ffn_dim, Activation activation, bool cross_attention, std::mt19937_64& rng)
    : self_attn_(store, name + ".self_attn", d_model, heads, rng),
      norm1_(store, name + ".norm1", d_model),
      cross_attn_(cross_attention ? std::optional<MultiHeadAttention>(std::in_place, store, name + ".cross_attn",
                                                                      d_model, heads, rng)
                                  : std::nullopt),
      norm_cross_(cross_attention ? std::optional<LayerNorm>(std::in_place, store, name + ".norm_cross", d_model)
                                  : std::nullopt),
      ffn_(store, name + ".ffn", d_model, ffn_dim, activation, rng),
      norm2_(store, name + ".norm2", d_model) {}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor* memory, const ForwardContext& ctx,
                                const std::optional<ProbSparseConfig>& sparse_self) const {
  const std::size_t length = x.shape()[x.dim() - 2];
  Tensor y = norm1_(add(x, maybe_dropout(self_attn_(x, x, causal_mask(length), sparse_self), ctx)));
  if (cross_attn_) {
    if (memory == nullptr) throw ContractError("decoder layer with cross-attention needs encoder memory");
    y = (*norm_cross_)(add(y, maybe_dropout((*cross_attn_)(y, *memory, std::nullopt, std::nullopt), ctx)));
  }
  return norm2_(add(y, maybe_dropout(ffn_(y, ctx), ctx)));
}

LSTMLayer::LSTMLayer(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden,
                     std::mt19937_64& rng)
    : hidden_(hidden),
      w_input_(store.add(name + ".w_input", glorot_uniform({input, 4 * hidden}, input, 4 * hidden, rng))),
      w_hidden_(store.add(name + ".w_hidden", glorot_uniform({hidden, 4 * hidden}, hidden, 4 * hidden, rng))),
      bias_(store.add(name + ".bias", Tensor::zeros({4 * hidden}))) {}

Tensor LSTMLayer::operator()(const Tensor& x) const {
  if (x.dim() != 3) throw ShapeError("LSTM input must be [B, T, C], got " + shape_str(x.shape()));
  const std::size_t batch = x.size(0);
  const std::size_t steps = x.size(1);
  const std::size_t H = hidden_;
  // Input contributions for every step in one product.
  const Tensor projected = add(matmul(x, w_input_), bias_);
  Tensor h = Tensor::zeros({batch, H});
  Tensor c = Tensor::zeros({batch, H});
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor gates = add(reshape(slice(projected, 1, t, 1), {batch, 4 * H}), matmul(h, w_hidden_));
    const Tensor i = sigmoid(slice(gates, 1, 0, H));
    const Tensor f = sigmoid(slice(gates, 1, H, H));
    const Tensor g = tanh(slice(gates, 1, 2 * H, H));
    const Tensor o = sigmoid(slice(gates, 1, 3 * H, H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    outputs.push_back(reshape(h, {batch, 1, H}));
  }
  return concat(outputs, 1);
}

CausalConv1d::CausalConv1d(ParameterStore& store, const std::string& name, std::size_t in_channels,
                           std::size_t out_channels, std::size_t kernel, std::size_t dilation, std::mt19937_64& rng)
    : in_channels_(in_channels),
      kernel_(kernel),
      dilation_(dilation),
      weight_(store.add(name + ".weight", glorot_uniform({kernel * in_channels, out_channels}, kernel * in_channels,
                                                         kernel * out_channels, rng))),
      bias_(store.add(name + ".bias", Tensor::zeros({out_channels}))) {}

Tensor CausalConv1d::operator()(const Tensor& x) const {
  if (x.dim() != 3 || x.size(2) != in_channels_) {
    throw ShapeError("conv input must be [B, T, " + std::to_string(in_channels_) + "], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.size(0);
  const std::size_t steps = x.size(1);
  const std::size_t pad = (kernel_ - 1) * dilation_;
  const Tensor padded = pad > 0 ? concat({Tensor::zeros({batch, pad, in_channels_}), x}, 1) : x;
  // Stack the shifted views along channels, then one product with the
  // stacked kernel.
  std::vector<Tensor> taps;
  taps.reserve(kernel_);
  for (std::size_t j = 0; j < kernel_; ++j) taps.push_back(slice(padded, 1, j * dilation_, steps));
  const Tensor stacked = kernel_ == 1 ? taps.front() : concat(taps, 2);
  return add(matmul(stacked, weight_), bias_);
}

TemporalBlock::TemporalBlock(ParameterStore& store, const std::string& name, std::size_t in_channels,
                             std::size_t out_channels, std::size_t kernel, std::size_t dilation, std::mt19937_64& rng)
    : conv1_(store, name + ".conv1", in_channels, out_channels, kernel, dilation, rng),
      conv2_(store, name + ".conv2", out_channels, out_channels, kernel, dilation, rng),
      downsample_(in_channels != out_channels
                      ? std::optional<Linear>(std::in_place, store, name + ".downsample", in_channels, out_channels, rng)
                      : std::nullopt) {}

Tensor TemporalBlock::operator()(const Tensor& x, const ForwardContext& ctx) const {
  Tensor y = maybe_dropout(relu(conv1_(x)), ctx);
  y = maybe_dropout(relu(conv2_(y)), ctx);
  const Tensor residual = downsample_ ? (*downsample_)(x) : x;
  return relu(add(y, residual));
}

}  // namespace tfbench::nn
