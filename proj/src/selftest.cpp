#include "tfbench/selftest.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "tfbench/attention.hpp"
#include "tfbench/data.hpp"
#include "tfbench/gradcheck.hpp"
#include "tfbench/metrics.hpp"
#include "tfbench/nn.hpp"
#include "tfbench/ops.hpp"
#include "tfbench/random.hpp"

namespace tfbench {

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor::from(shape, std::move(v));
}

std::string format_error(double e) {
  std::ostringstream os;
  os.precision(3);
  os << e;
  return os.str();
}

// Weighted so the scalar loss depends on every entry.
Tensor weighted_sum(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

SelfCheck check_op_gradients() {
  std::mt19937_64 rng(11);
  const GradCheckOptions opts{1e-5, 1e-4, 1e-7, 1e-6};
  using Op = std::function<Tensor(const Tensor&, const Tensor&)>;
  const std::vector<std::pair<const char*, Op>> ops = {
      {"matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, transpose(b, 1, 2)); }},
      {"add", [](const Tensor& a, const Tensor& b) { return add(a, b); }},
      {"sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
      {"mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
      {"tanh", [](const Tensor& a, const Tensor&) { return tanh(a); }},
      {"sigmoid", [](const Tensor& a, const Tensor&) { return sigmoid(a); }},
      {"gelu", [](const Tensor& a, const Tensor&) { return gelu(a); }},
      {"softmax", [](const Tensor& a, const Tensor&) { return softmax_lastdim(a); }},
      {"mean_axis", [](const Tensor& a, const Tensor& b) { return mul(mean_axis(a, 1), mean_axis(b, 1)); }},
      {"slice_concat",
       [](const Tensor& a, const Tensor& b) { return concat({slice(a, 2, 1, 2), slice(b, 2, 0, 1)}, 2); }},
  };
  double worst = 0.0;
  for (const auto& [name, op] : ops) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a = random_tensor({2, 3, 4}, rng).set_requires_grad();
      Tensor b = random_tensor({2, 3, 4}, rng).set_requires_grad();
      const Tensor probe = op(a, b);
      const Tensor w = random_tensor(probe.shape(), rng);
      const auto report = finite_diff_check([&] { return weighted_sum(op(a, b), w); }, {a, b}, opts);
      worst = std::max(worst, report.max_rel_error);
      if (!report.passed) return {"op gradients", false, std::string(name) + ": " + report.detail};
    }
  }
  return {"op gradients", true, "max relative error " + format_error(worst)};
}

SelfCheck check_block_gradient() {
  std::mt19937_64 rng(12);
  nn::ParameterStore store;
  const std::size_t d = 8, heads = 2, ffn = 16;
  // Smooth activation: central differences straddling a ReLU kink are not
  // meaningful.
  nn::EncoderLayer enc(store, "enc", d, heads, ffn, nn::Activation::gelu, rng);
  nn::DecoderLayer dec(store, "dec", d, heads, ffn, nn::Activation::gelu, true, rng);
  std::vector<Tensor> params;
  for (const auto& [name, p] : store.entries()) params.push_back(p);
  const nn::ForwardContext ctx{};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor src = random_tensor({2, 5, d}, rng).set_requires_grad();
    Tensor tgt = random_tensor({2, 4, d}, rng).set_requires_grad();
    const Tensor w = random_tensor({2, 4, d}, rng);
    auto wrt = params;
    wrt.push_back(src);
    wrt.push_back(tgt);
    const auto report = finite_diff_check(
        [&] {
          const Tensor memory = enc(src, ctx, std::nullopt);
          return weighted_sum(dec(tgt, &memory, ctx, std::nullopt), w);
        },
        wrt, GradCheckOptions{1e-5, 1e-3, 1e-7, 1e-6});
    worst = std::max(worst, report.max_rel_error);
    if (!report.passed) return {"transformer block gradient", false, report.detail};
  }
  return {"transformer block gradient", true, "max relative error " + format_error(worst)};
}

SelfCheck check_probsparse() {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = 2 + uniform_index(rng, 31);
    const std::size_t heads = 1 + uniform_index(rng, 2);
    const std::size_t d = 4 * heads;
    AttentionInputs in{random_tensor({1, L, d}, rng), random_tensor({1, L, d}, rng), random_tensor({1, L, d}, rng),
                       heads, std::nullopt, std::nullopt, std::nullopt};
    // Factors large enough that every key is sampled and every query active.
    const ProbSparseConfig full{1e6, 1e6, static_cast<std::uint64_t>(trial)};
    const Tensor dense = full_attention(in);
    const Tensor sparse = probsparse_attention(in, full);
    for (std::size_t i = 0; i < dense.numel(); ++i) {
      if (std::abs(dense.data()[i] - sparse.data()[i]) > 1e-10) {
        return {"probsparse equivalence", false, "mismatch at L=" + std::to_string(L)};
      }
    }
  }
  return {"probsparse equivalence", true, "100 instances within 1e-10"};
}

SelfCheck check_metrics() {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 64);
    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform(rng, -5, 5);
      p[i] = uniform(rng, -5, 5);
    }
    double a = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += std::abs(y[i] - p[i]);
      s += (y[i] - p[i]) * (y[i] - p[i]);
    }
    a /= static_cast<double>(n);
    s /= static_cast<double>(n);
    const double m1 = mae(y, p), m2 = mse(y, p);
    if (std::abs(m1 - a) > 1e-12 || std::abs(m2 - s) > 1e-12 || m2 < m1 * m1 - 1e-15) {
      return {"metric oracles", false, "trial " + std::to_string(trial)};
    }
  }
  return {"metric oracles", true, "1000 random vector pairs"};
}

SelfCheck check_windows() {
  for (std::size_t len = 50; len <= 200; ++len) {
    std::vector<double> s(len);
    for (std::size_t i = 0; i < len; ++i) s[i] = static_cast<double>(i);
    for (std::size_t w : {5, 10, 15}) {
      for (std::size_t h : {1, 5, 10}) {
        const auto ds = make_windows(s, w, h);
        if (ds.rows != len - w - h + 1) return {"window layout", false, "row count"};
        for (std::size_t i = 0; i < ds.rows; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            if (ds.input_row(i)[j] != static_cast<double>(i + j)) return {"window layout", false, "inputs"};
          }
          for (std::size_t k = 0; k < h; ++k) {
            if (ds.target_row(i)[k] != static_cast<double>(i + w + k)) return {"window layout", false, "targets"};
          }
        }
      }
    }
  }
  return {"window layout", true, "lengths 50..200, 9 window/horizon pairs"};
}

}  // namespace

std::vector<SelfCheck> run_selftest() {
  return {check_op_gradients(), check_block_gradient(), check_probsparse(), check_metrics(), check_windows()};
}

}  // namespace tfbench
