#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "attention_oracle.hpp"
#include "test_util.hpp"
#include "tfbench/attention.hpp"
#include "tfbench/errors.hpp"
#include "tfbench/gradcheck.hpp"
#include "tfbench/ops.hpp"

using namespace tfbench;
using namespace tfbench::testing;

namespace {

// Factors that force u = L_q and sampled keys = L_k for every L <= 32.
ProbSparseConfig dense_config(std::uint64_t seed) { return ProbSparseConfig{100.0, 100.0, seed}; }

AttentionInputs random_inputs(std::size_t lq, std::size_t lk, std::size_t d, std::size_t heads,
                              std::mt19937_64& rng) {
  return AttentionInputs{random_tensor({lq, d}, rng, -2.0, 2.0), random_tensor({lk, d}, rng, -2.0, 2.0),
                         random_tensor({lk, d}, rng, -2.0, 2.0), heads, std::nullopt, std::nullopt, std::nullopt};
}

}  // namespace

TEST_CASE("causal mask") {
  const auto m1 = causal_mask(1);
  CHECK(m1.allowed(0, 0));
  const auto m3 = causal_mask(3);
  CHECK(m3.allowed_count() == 6);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(m3.allowed(i, j) == (j <= i));
  for (std::size_t L = 1; L <= 32; ++L) CHECK(causal_mask(L).allowed_count() == L * (L + 1) / 2);
  CHECK_THROWS_AS(causal_mask(0), ContractError);
}

TEST_CASE("full attention trivial cases") {
  std::mt19937_64 rng(1);
  // A single key gets all the weight.
  AttentionInputs one = random_inputs(1, 1, 4, 1, rng);
  const Tensor out1 = full_attention(one);
  CHECK(max_abs_diff(out1.data(), one.v.data()) <= 1e-15);

  // Identical keys give uniform weights: the output is the mean of V.
  AttentionInputs same = random_inputs(3, 5, 4, 2, rng);
  std::vector<double> k(5 * 4);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < 4; ++c) k[j * 4 + c] = 0.3 * static_cast<double>(c) - 0.4;
  same.k = Tensor::from({5, 4}, k);
  const Tensor out = full_attention(same);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      double m = 0.0;
      for (std::size_t j = 0; j < 5; ++j) m += same.v.at({j, c});
      CHECK(out.at({i, c}) == doctest::Approx(m / 5.0).epsilon(1e-12));
    }
}

TEST_CASE("full attention matches the naive loop oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    AttentionInputs in = random_inputs(6, 6, 16, 2, rng);
    const Matrix expect = naive_attention(to_matrix(in.q), to_matrix(in.k), to_matrix(in.v), 2, std::nullopt);
    CHECK(max_abs_diff(full_attention(in).data(), expect.v) <= 1e-10);

    in.mask = causal_mask(6);
    const Matrix masked = naive_attention(to_matrix(in.q), to_matrix(in.k), to_matrix(in.v), 2, in.mask);
    CHECK(max_abs_diff(full_attention(in).data(), masked.v) <= 1e-10);
  }
  // Cross-attention shapes.
  AttentionInputs cross = random_inputs(3, 7, 8, 4, rng);
  const Matrix expect = naive_attention(to_matrix(cross.q), to_matrix(cross.k), to_matrix(cross.v), 4, std::nullopt);
  CHECK(max_abs_diff(full_attention(cross).data(), expect.v) <= 1e-10);
}

TEST_CASE("batched attention equals per-sample attention") {
  std::mt19937_64 rng(17);
  const Tensor q = random_tensor({3, 5, 8}, rng);
  const Tensor k = random_tensor({3, 5, 8}, rng);
  const Tensor v = random_tensor({3, 5, 8}, rng);
  const Tensor batched = full_attention({q, k, v, 2, causal_mask(5), std::nullopt, std::nullopt});
  for (std::size_t b = 0; b < 3; ++b) {
    auto row = [&](const Tensor& t) { return reshape(slice(t, 0, b, 1), {5, 8}); };
    const Tensor single = full_attention({row(q), row(k), row(v), 2, causal_mask(5), std::nullopt, std::nullopt});
    CHECK(max_abs_diff(row(batched).data(), single.data()) == 0.0);
  }
}

TEST_CASE("attention input contracts") {
  std::mt19937_64 rng(2);
  AttentionInputs bad_heads = random_inputs(4, 4, 6, 4, rng);
  CHECK_THROWS_AS(full_attention(bad_heads), ShapeError);
  AttentionInputs bad_mask = random_inputs(4, 4, 8, 2, rng);
  bad_mask.mask = causal_mask(3);
  CHECK_THROWS_AS(full_attention(bad_mask), ShapeError);
  AttentionInputs blocked = random_inputs(2, 2, 4, 1, rng);
  blocked.mask = AttentionMask(2, 2, true);
  blocked.mask->set(1, 0, false);
  blocked.mask->set(1, 1, false);
  CHECK_THROWS_AS(full_attention(blocked), DegenerateMaskError);
  AttentionInputs cross = random_inputs(3, 5, 4, 1, rng);
  CHECK_THROWS_AS(probsparse_attention(cross, ProbSparseConfig{}), ContractError);
}

TEST_CASE("causal attention row i ignores later inputs") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t L = 2 + trial % 12;
    AttentionInputs in = random_inputs(L, L, 8, 2, rng);
    in.mask = causal_mask(L);
    const Tensor base = full_attention(in);
    const std::size_t cut = static_cast<std::size_t>(uniform_index(rng, L - 1));
    std::vector<double> kv(in.k.data().begin(), in.k.data().end());
    std::vector<double> vv(in.v.data().begin(), in.v.data().end());
    std::vector<double> qv(in.q.data().begin(), in.q.data().end());
    for (std::size_t i = (cut + 1) * 8; i < kv.size(); ++i) {
      kv[i] += uniform(rng, -5, 5);
      vv[i] += uniform(rng, -5, 5);
      qv[i] += uniform(rng, -5, 5);
    }
    AttentionInputs moved{Tensor::from({L, 8}, qv), Tensor::from({L, 8}, kv), Tensor::from({L, 8}, vv), 2,
                          in.mask, std::nullopt, std::nullopt};
    const Tensor after = full_attention(moved);
    for (std::size_t r = 0; r <= cut; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(after.at({r, c}) == base.at({r, c}));
  }
}

TEST_CASE("sparsity measures") {
  // q = 0 gives equal scores: log-sum-exp minus mean is ln L.
  const std::vector<double> zero(4, 0.0);
  std::mt19937_64 rng(3);
  const Tensor keys = random_tensor({7, 4}, rng);
  CHECK(sparsity_measure_exact(zero, keys) == doctest::Approx(std::log(7.0)).epsilon(1e-15));

  const std::vector<double> q = {0.4, -1.2, 0.9, 2.0};
  CHECK(sparsity_measure_exact(q, random_tensor({1, 4}, rng)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sparsity_measure_approx(zero, keys) == 0.0);

  // Scores [3, 1] with d = 1: max 3, mean 2.
  CHECK(sparsity_measure_approx(std::vector<double>{1.0}, Tensor::from({2, 1}, {3.0, 1.0})) == 1.0);

  for (int trial = 0; trial < 50; ++trial) {
    const Tensor k16 = random_tensor({16, 4}, rng, -2.0, 2.0);
    const Tensor qt = random_tensor({4}, rng, -2.0, 2.0);
    double lse = 0.0, mean = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 4; ++c) dot += qt.data()[c] * k16.at({j, c});
      lse += std::exp(dot / 2.0);
      mean += dot / 2.0;
    }
    const double direct = std::log(lse) - mean / 16.0;
    CHECK(std::abs(sparsity_measure_exact(qt.data(), k16) - direct) <= 1e-10);
  }
}

TEST_CASE("sparsity measures are non-negative on random draws") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = 1 + uniform_index(rng, 20);
    const Tensor k = random_tensor({L, 6}, rng, -3.0, 3.0);
    const Tensor q = random_tensor({6}, rng, -3.0, 3.0);
    CHECK(sparsity_measure_exact(q.data(), k) >= 0.0);
    CHECK(sparsity_measure_approx(q.data(), k) >= 0.0);
  }
}

TEST_CASE("select_top_u") {
  const std::vector<double> s = {5, 1, 9};
  CHECK(select_top_u(s, 2) == std::vector<std::size_t>{2, 0});
  CHECK(select_top_u(s, 3).size() == 3);
  CHECK_THROWS_AS(select_top_u(s, 4), ContractError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> scores(12);
    for (auto& x : scores) x = static_cast<double>(uniform_index(rng, 4));  // many ties
    const std::size_t u = 1 + uniform_index(rng, 12);
    // Oracle: insertion sort, which is stable by construction.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      auto pos = order.end();
      while (pos != order.begin() && scores[*(pos - 1)] < scores[i]) --pos;
      order.insert(pos, i);
    }
    order.resize(u);
    CHECK(select_top_u(scores, u) == order);
  }
}

TEST_CASE("probsparse config clamps") {
  const ProbSparseConfig def{};
  CHECK(def.sampled_keys(15) == 14);  // ceil(5 ln 15) = ceil(13.54)
  CHECK(def.active_queries(5) == 5);  // ceil(8.05) clamped to 5
  CHECK(def.active_queries(1) == 1);  // ln 1 = 0 still keeps one query
  const ProbSparseConfig tiny{1e-9, 1e-9, 0};
  CHECK(tiny.sampled_keys(10) == 1);
  CHECK(tiny.active_queries(10) == 1);
}

TEST_CASE("probsparse equals full attention when every query is active") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 1 + uniform_index(rng, 32);
    const AttentionInputs in = random_inputs(L, L, 8, 2, rng);
    const Tensor full = full_attention(in);
    const Tensor sparse = probsparse_attention(in, dense_config(trial));
    CHECK(max_abs_diff(full.data(), sparse.data()) <= 1e-10);
  }
}

TEST_CASE("probsparse matches the direct loop oracle") {
  std::mt19937_64 rng(41);
  // L = 8, d = 4, u = ceil(0.9 ln 8) = 2.
  const ProbSparseConfig cfg{1.2, 0.9, 1234};
  REQUIRE(cfg.active_queries(8) == 2);
  for (int trial = 0; trial < 20; ++trial) {
    const AttentionInputs in = random_inputs(8, 8, 4, 1, rng);
    std::vector<std::vector<bool>> selected;
    const Matrix expect = literal_probsparse(to_matrix(in.q), to_matrix(in.k), to_matrix(in.v), 1, cfg, &selected);
    const Tensor got = probsparse_attention(in, cfg);
    CHECK(max_abs_diff(got.data(), expect.v) <= 1e-10);
    // Non-selected rows are their value rows exactly.
    for (std::size_t i = 0; i < 8; ++i) {
      if (selected[0][i]) continue;
      for (std::size_t c = 0; c < 4; ++c) CHECK(got.at({i, c}) == in.v.at({i, c}));
    }
  }
  // Multi-head.
  const ProbSparseConfig cfg2{1.0, 1.0, 77};
  for (int trial = 0; trial < 20; ++trial) {
    const AttentionInputs in = random_inputs(12, 12, 16, 4, rng);
    const Matrix expect = literal_probsparse(to_matrix(in.q), to_matrix(in.k), to_matrix(in.v), 4, cfg2);
    CHECK(max_abs_diff(probsparse_attention(in, cfg2).data(), expect.v) <= 1e-10);
  }
}

TEST_CASE("probsparse is deterministic under a fixed seed") {
  std::mt19937_64 rng(51);
  const AttentionInputs in = random_inputs(15, 15, 8, 2, rng);
  const ProbSparseConfig cfg{1.0, 1.0, 9};
  const Tensor a = probsparse_attention(in, cfg);
  const Tensor b = probsparse_attention(in, cfg);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("attention gradients") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = random_tensor({5, 8}, rng);
    Tensor k = random_tensor({5, 8}, rng);
    Tensor v = random_tensor({5, 8}, rng);
    Tensor wo = random_tensor({8, 8}, rng);
    Tensor w = random_tensor({5, 8}, rng);
    const auto full = finite_diff_check(
        [&] { return sum(mul(full_attention({q, k, v, 2, causal_mask(5), wo, std::nullopt}), w)); }, {q, k, v, wo});
    CHECK_MESSAGE(full.passed, full.detail);
    const auto sparse = finite_diff_check(
        [&] {
          return sum(mul(probsparse_attention({q, k, v, 2, std::nullopt, std::nullopt, std::nullopt},
                                              ProbSparseConfig{1.0, 0.5, 3}),
                         w));
        },
        {q, k, v});
    CHECK_MESSAGE(sparse.passed, sparse.detail);
  }
}
