#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tfbench/tensor.hpp"

namespace tfbench {

// Boolean [rows, cols] matrix; true means the query row may attend to the
// key column.
class AttentionMask {
 public:
  AttentionMask(std::size_t rows, std::size_t cols, bool allow_all = true);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t i, std::size_t j) const { return allow_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allow) { allow_[i * cols_ + j] = allow ? 1 : 0; }
  std::size_t allowed_count() const;

  // Additive form: 0 where allowed, -inf where blocked.
  Tensor additive() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<unsigned char> allow_;
};

// Entry (i, j) allowed iff j <= i.
AttentionMask causal_mask(std::size_t length);

// Q: [..., L_q, d_model]; K, V: [..., L_k, d_model]. Leading axes are batch.
struct AttentionInputs {
  Tensor q;
  Tensor k;
  Tensor v;
  std::size_t n_heads = 1;
  std::optional<AttentionMask> mask;
  // Optional output projection applied to the concatenated heads.
  std::optional<Tensor> out_weight;
  std::optional<Tensor> out_bias;
};

struct ProbSparseConfig {
  double sample_factor = 5.0;  // sampled keys = ceil(sample_factor * ln L_k)
  double top_factor = 5.0;     // active queries = ceil(top_factor * ln L_q)
  std::uint64_t rng_seed = 0;

  std::size_t sampled_keys(std::size_t key_count) const;
  std::size_t active_queries(std::size_t query_count) const;
};

// Multi-head scaled dot-product attention. Per head:
// softmax(Q K^T / sqrt(d) + mask) V, heads concatenated (and projected when
// the inputs carry a projection).
Tensor full_attention(const AttentionInputs& inputs);

// ProbSparse self-attention: only the queries with the largest sampled
// sparsity scores attend; every other query passes its own value row through.
Tensor probsparse_attention(const AttentionInputs& inputs, const ProbSparseConfig& config);

// ln sum_j exp(s_j) - mean_j s_j with s_j = q . k_j / sqrt(d).
// `keys` is [L, d].
double sparsity_measure_exact(std::span<const double> query, const Tensor& keys);

// max_j s_j - mean_j s_j over the sampled keys only.
double sparsity_measure_approx(std::span<const double> query, const Tensor& sampled_keys);

// Indices of the u largest scores, largest first; equal scores resolve to the
// lower index.
std::vector<std::size_t> select_top_u(std::span<const double> scores, std::size_t u);

// `count` distinct indices drawn uniformly from [0, n) by a partial Fisher-Yates
// shuffle, returned in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, std::mt19937_64& rng);

}  // namespace tfbench
