#include "tfbench/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tfbench/errors.hpp"
#include "tfbench/ops.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, bool allow_all)
    : rows_(rows), cols_(cols), allow_(rows * cols, allow_all ? 1 : 0) {}

std::size_t AttentionMask::allowed_count() const {
  return static_cast<std::size_t>(std::count(allow_.begin(), allow_.end(), 1));
}

Tensor AttentionMask::additive() const {
  std::vector<double> values(allow_.size());
  for (std::size_t i = 0; i < allow_.size(); ++i) {
    values[i] = allow_[i] ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return Tensor::from({rows_, cols_}, std::move(values));
}

AttentionMask causal_mask(std::size_t length) {
  if (length == 0) throw ContractError("causal_mask length must be >= 1");
  AttentionMask mask(length, length, false);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  }
  return mask;
}

namespace {

std::size_t clamp_count(double raw, std::size_t upper) {
  const double c = std::ceil(raw);
  if (!(c >= 1.0)) return 1;
  return std::min(upper, static_cast<std::size_t>(c));
}

struct HeadLayout {
  Shape lead;  // leading batch axes of the inputs
  std::size_t batch = 1;
  std::size_t lq = 0;
  std::size_t lk = 0;
  std::size_t d_model = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 0;
};

HeadLayout check_inputs(const AttentionInputs& in) {
  const auto& qs = in.q.shape();
  const auto& ks = in.k.shape();
  const auto& vs = in.v.shape();
  if (qs.size() < 2 || ks.size() < 2 || vs.size() < 2) {
    throw ShapeError("attention inputs need rank >= 2");
  }
  HeadLayout h;
  h.lead.assign(qs.begin(), qs.end() - 2);
  if (Shape(ks.begin(), ks.end() - 2) != h.lead || Shape(vs.begin(), vs.end() - 2) != h.lead) {
    throw ShapeError("attention batch axes differ: Q " + shape_str(qs) + ", K " + shape_str(ks) + ", V " +
                     shape_str(vs));
  }
  h.batch = shape_numel(h.lead);
  h.lq = qs[qs.size() - 2];
  h.lk = ks[ks.size() - 2];
  h.d_model = qs.back();
  if (ks.back() != h.d_model || vs.back() != h.d_model) {
    throw ShapeError("attention model widths differ: Q " + shape_str(qs) + ", K " + shape_str(ks) + ", V " +
                     shape_str(vs));
  }
  if (vs[vs.size() - 2] != h.lk) throw ShapeError("K and V lengths differ");
  if (in.n_heads == 0 || h.d_model % in.n_heads != 0) {
    throw ShapeError("d_model " + std::to_string(h.d_model) + " not divisible by " + std::to_string(in.n_heads) +
                     " heads");
  }
  h.heads = in.n_heads;
  h.head_dim = h.d_model / in.n_heads;
  if (in.mask && (in.mask->rows() != h.lq || in.mask->cols() != h.lk)) {
    throw ShapeError("mask shape does not match [L_q, L_k]");
  }
  return h;
}

// [..., L, D] -> [B, H, L, dh]
Tensor split_heads(const Tensor& t, const HeadLayout& h, std::size_t length) {
  return transpose(reshape(t, {h.batch, length, h.heads, h.head_dim}), 1, 2);
}

// [B, H, L, dh] -> [..., L, D], then the optional projection.
Tensor merge_heads(const Tensor& t, const HeadLayout& h, const AttentionInputs& in) {
  Shape out_shape = h.lead;
  out_shape.push_back(h.lq);
  out_shape.push_back(h.d_model);
  Tensor merged = reshape(transpose(t, 1, 2), out_shape);
  if (in.out_weight) merged = matmul(merged, *in.out_weight);
  if (in.out_bias) merged = add(merged, *in.out_bias);
  return merged;
}

// Scaled scores [B, H, L_q, L_k] before masking.
Tensor head_scores(const Tensor& q, const Tensor& k, const HeadLayout& h) {
  return scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(h.head_dim)));
}

Tensor attend(const Tensor& scores, const Tensor& v, const AttentionInputs& in) {
  Tensor s = in.mask ? add(scores, in.mask->additive()) : scores;
  return matmul(softmax_lastdim(s), v);
}

}  // namespace

std::size_t ProbSparseConfig::sampled_keys(std::size_t key_count) const {
  if (!(sample_factor > 0.0)) throw ContractError("sample_factor must be positive");
  return clamp_count(sample_factor * std::log(static_cast<double>(key_count)), key_count);
}

std::size_t ProbSparseConfig::active_queries(std::size_t query_count) const {
  if (!(top_factor > 0.0)) throw ContractError("top_factor must be positive");
  return clamp_count(top_factor * std::log(static_cast<double>(query_count)), query_count);
}

Tensor full_attention(const AttentionInputs& inputs) {
  const HeadLayout h = check_inputs(inputs);
  const Tensor q = split_heads(inputs.q, h, h.lq);
  const Tensor k = split_heads(inputs.k, h, h.lk);
  const Tensor v = split_heads(inputs.v, h, h.lk);
  return merge_heads(attend(head_scores(q, k, h), v, inputs), h, inputs);
}

Tensor probsparse_attention(const AttentionInputs& inputs, const ProbSparseConfig& config) {
  const HeadLayout h = check_inputs(inputs);
  if (h.lq != h.lk) {
    throw ContractError("probsparse_attention needs L_q == L_k, got " + std::to_string(h.lq) + " and " +
                        std::to_string(h.lk));
  }
  const std::size_t n_sample = config.sampled_keys(h.lk);
  const std::size_t n_top = config.active_queries(h.lq);

  const Tensor q = split_heads(inputs.q, h, h.lq);
  const Tensor k = split_heads(inputs.k, h, h.lk);
  const Tensor v = split_heads(inputs.v, h, h.lk);
  const Tensor scores = head_scores(q, k, h);
  const Tensor attended = attend(scores, v, inputs);

  // Query selection is discrete and does not carry gradient.
  const auto& s = scores.data();
  const std::size_t L = h.lq;
  const std::size_t dh = h.head_dim;
  std::vector<double> keep(attended.numel(), 0.0);
  std::vector<double> pass(attended.numel(), 1.0);
  std::mt19937_64 rng(config.rng_seed);
  std::vector<double> measure(L);
  for (std::size_t bh = 0; bh < h.batch * h.heads; ++bh) {
    const auto sampled = sample_without_replacement(L, n_sample, rng);
    for (std::size_t i = 0; i < L; ++i) {
      const double* row = s.data() + (bh * L + i) * L;
      double mx = -std::numeric_limits<double>::infinity();
      double total = 0.0;
      std::size_t used = 0;
      for (std::size_t j : sampled) {
        if (inputs.mask && !inputs.mask->allowed(i, j)) continue;
        mx = std::max(mx, row[j]);
        total += row[j];
        ++used;
      }
      measure[i] = used == 0 ? -std::numeric_limits<double>::infinity() : mx - total / static_cast<double>(used);
    }
    for (std::size_t i : select_top_u(measure, n_top)) {
      const std::size_t base = (bh * L + i) * dh;
      std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(base), dh, 1.0);
      std::fill_n(pass.begin() + static_cast<std::ptrdiff_t>(base), dh, 0.0);
    }
  }
  const Shape& shape = attended.shape();
  const Tensor mixed =
      add(mul(attended, Tensor::from(shape, std::move(keep))), mul(v, Tensor::from(shape, std::move(pass))));
  return merge_heads(mixed, h, inputs);
}

double sparsity_measure_exact(std::span<const double> query, const Tensor& keys) {
  if (keys.dim() != 2 || keys.size(1) != query.size()) {
    throw ShapeError("keys " + shape_str(keys.shape()) + " do not match query of length " +
                     std::to_string(query.size()));
  }
  const std::size_t L = keys.size(0);
  const std::size_t d = query.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> s(L);
  for (std::size_t j = 0; j < L; ++j) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += query[c] * keys.data()[j * d + c];
    s[j] = dot * inv_sqrt_d;
  }
  const double mx = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  double mean = 0.0;
  for (double x : s) {
    total += std::exp(x - mx);
    mean += x;
  }
  mean /= static_cast<double>(L);
  return mx + std::log(total) - mean;
}

double sparsity_measure_approx(std::span<const double> query, const Tensor& sampled_keys) {
  if (sampled_keys.dim() != 2 || sampled_keys.size(1) != query.size()) {
    throw ShapeError("sampled keys " + shape_str(sampled_keys.shape()) + " do not match query of length " +
                     std::to_string(query.size()));
  }
  const std::size_t L = sampled_keys.size(0);
  const std::size_t d = query.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  double mx = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += query[c] * sampled_keys.data()[j * d + c];
    const double s = dot * inv_sqrt_d;
    mx = std::max(mx, s);
    total += s;
  }
  return mx - total / static_cast<double>(L);
}

std::vector<std::size_t> select_top_u(std::span<const double> scores, std::size_t u) {
  if (u > scores.size()) {
    throw ContractError("select_top_u: u = " + std::to_string(u) + " exceeds " + std::to_string(scores.size()) +
                        " scores");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(u);
  return idx;
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  if (count > n) throw ContractError("cannot sample more items than available");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace tfbench
