#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <unordered_map>

#include "test_util.hpp"
#include "tfbench/errors.hpp"
#include "tfbench/gradcheck.hpp"
#include "tfbench/ops.hpp"

using namespace tfbench;
using tfbench::testing::random_tensor;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Random inputs kept away from the relu kink so central differences are
// well-defined.
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    const double mag = uniform(rng, 0.1, 1.5);
    x = uniform01(rng) < 0.5 ? -mag : mag;
  }
  return Tensor::from(shape, std::move(v));
}
}  // namespace

TEST_CASE("matmul hand examples") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  const Tensor c = matmul(eye, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{3, 4, 5, 6});

  const Tensor r = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(r.item() == 11.0);
}

TEST_CASE("matmul shape errors name both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({3, 3, 2})), ShapeError);
}

TEST_CASE("matmul broadcasts batch axes") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({2, 3, 4, 5}, rng);
  const Tensor b = random_tensor({3, 5, 2}, rng);
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 4, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t col = 0; col < 2; ++col) {
          double expect = 0.0;
          for (std::size_t k = 0; k < 5; ++k) expect += a.at({i, j, r, k}) * b.at({j, k, col});
          CHECK(c.at({i, j, r, col}) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    const auto report = finite_diff_check([&] { return sum(matmul(a, b)); }, {a, b});
    CHECK_MESSAGE(report.passed, report.detail);
    CHECK(report.max_rel_error <= 1e-4);
  }
  // Broadcast batch path.
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({2, 2, 3, 4}, rng);
    Tensor b = random_tensor({2, 1, 4, 2}, rng);
    Tensor w = random_tensor({2, 2, 3, 2}, rng);
    const auto report = finite_diff_check([&] { return sum(mul(matmul(a, b), w)); }, {a, b});
    CHECK_MESSAGE(report.passed, report.detail);
  }
}

TEST_CASE("softmax examples") {
  const Tensor u = softmax_lastdim(Tensor::zeros({3}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  for (double x : {-50.0, 0.0, 3.5, 700.0}) {
    const Tensor m = softmax_lastdim(Tensor::from({2}, {x, kNegInf}));
    CHECK(m.data()[0] == 1.0);
    CHECK(m.data()[1] == 0.0);
  }

  CHECK_THROWS_AS(softmax_lastdim(Tensor::from({2, 2}, {0, 1, kNegInf, kNegInf})), DegenerateMaskError);
}

TEST_CASE("softmax matches the direct formula and rows sum to one") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor({8}, rng, -3.0, 3.0);
    const Tensor y = softmax_lastdim(x);
    double denom = 0.0;
    for (double v : x.data()) denom += std::exp(v);
    double total = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::abs(y.data()[i] - std::exp(x.data()[i]) / denom) <= 1e-12);
      CHECK(y.data()[i] >= 0.0);
      total += y.data()[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("layer_norm examples") {
  const Tensor g = Tensor::ones({3});
  const Tensor b = Tensor::zeros({3});
  const Tensor c = layer_norm(Tensor::from({3}, {5, 5, 5}), g, b, 1e-5);
  for (double v : c.data()) CHECK(v == 0.0);

  const Tensor s = layer_norm(Tensor::from({2}, {1, -1}), Tensor::ones({2}), Tensor::zeros({2}), 1e-300);
  CHECK(s.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(-1.0).epsilon(1e-12));

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), Tensor::ones({2}), Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), Tensor::ones({3}), Tensor::zeros({3}), 0.0), ContractError);
}

TEST_CASE("layer_norm standardises each slice") {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({6, 16}, rng, -4.0, 4.0);
  const Tensor y = layer_norm(x, Tensor::ones({16}), Tensor::zeros({16}), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 16; ++j) m += y.at({r, j});
    m /= 16;
    for (std::size_t j = 0; j < 16; ++j) v += (y.at({r, j}) - m) * (y.at({r, j}) - m);
    v /= 16;
    CHECK(std::abs(m) <= 1e-9);
    CHECK(std::abs(v - 1.0) <= 1e-6);
  }
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 8}, rng, -2.0, 2.0);
    Tensor g = random_tensor({8}, rng, 0.5, 1.5);
    Tensor b = random_tensor({8}, rng);
    Tensor w = random_tensor({4, 8}, rng);
    const auto report = finite_diff_check([&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)); }, {x, g, b});
    CHECK_MESSAGE(report.passed, report.detail);
  }
}

TEST_CASE("elementwise examples") {
  const Tensor r = relu(Tensor::from({3}, {-1, 0, 2}));
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0, 0, 2});
  CHECK(std::isnan(relu(Tensor::scalar(NAN)).item()));
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(elementwise(Elementwise::scale, Tensor::scalar(2.0), Tensor(), 3.0).item() == 6.0);
  CHECK_THROWS_AS(elementwise(Elementwise::add, Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("every elementwise kind passes the gradient check") {
  std::mt19937_64 rng(33);
  const Elementwise kinds[] = {Elementwise::relu, Elementwise::gelu, Elementwise::tanh, Elementwise::sigmoid,
                               Elementwise::add,  Elementwise::mul,  Elementwise::scale};
  for (auto kind : kinds) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor a = away_from_zero({3, 4}, rng);
      Tensor b = away_from_zero({3, 4}, rng);
      Tensor w = random_tensor({3, 4}, rng);
      const auto report =
          finite_diff_check([&] { return sum(mul(elementwise(kind, a, b, -1.7), w)); }, {a, b});
      CHECK_MESSAGE(report.passed, static_cast<int>(kind), " ", report.detail);
    }
  }
}

TEST_CASE("structural ops pass the gradient check") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor y = random_tensor({2, 2, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    Tensor w1 = random_tensor({4, 3, 2}, rng);
    Tensor w2 = random_tensor({2, 4}, rng);
    Tensor w3 = random_tensor({2, 5, 4}, rng);
    CHECK(finite_diff_check([&] { return sum(mul(transpose(x, 0, 2), w1)); }, {x}).passed);
    CHECK(finite_diff_check([&] { return sum(mul(mean_axis(x, 1), w2)); }, {x}).passed);
    CHECK(finite_diff_check([&] { return sum(mul(concat({x, y}, 1), w3)); }, {x, y}).passed);
    CHECK(finite_diff_check([&] { return sum(mul(slice(x, 1, 1, 2), y)); }, {x, y}).passed);
    CHECK(finite_diff_check([&] { return sum(mul(add(x, bias), add(x, bias))); }, {x, bias}).passed);
    CHECK(finite_diff_check([&] { return sum(mul(sub(bias, x), x)); }, {x, bias}).passed);
    CHECK(finite_diff_check([&] { return mean(mul(reshape(x, {6, 4}), reshape(x, {6, 4}))); }, {x}).passed);
    Tensor s = random_tensor({3, 5}, rng, -2.0, 2.0);
    Tensor ws = random_tensor({3, 5}, rng);
    CHECK(finite_diff_check([&] { return sum(mul(softmax_lastdim(s), ws)); }, {s}).passed);
    Tensor p = random_tensor({4, 2}, rng);
    Tensor t = random_tensor({4, 2}, rng);
    CHECK(finite_diff_check([&] { return mse_loss(p, t); }, {p}).passed);
  }
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad();
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::from({3}, {1, 2, 3});
  y.set_requires_grad();
  sum(mul(y, y)).backward();
  CHECK(y.grad() == std::vector<double>{2, 4, 6});

  // Repeated backward accumulates into leaves.
  sum(mul(y, y)).backward();
  CHECK(y.grad() == std::vector<double>{4, 8, 12});
  y.zero_grad();
  CHECK(y.grad() == std::vector<double>{0, 0, 0});

  CHECK_THROWS_AS(mul(y, y).backward(), ContractError);
}

TEST_CASE("no-grad guard stops recording") {
  Tensor x = Tensor::from({2}, {1, 2});
  x.set_requires_grad();
  {
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("recorded operations cannot be mutated") {
  Tensor x = Tensor::from({2}, {1, 2});
  x.set_requires_grad();
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(y.mutable_data(), ContractError);
}

TEST_CASE("tape is topologically ordered") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  a.set_requires_grad();
  b.set_requires_grad();
  const Tensor h = tanh(matmul(a, b));
  const Tensor loss = mean(mul(add(h, a), h));
  const auto tape = record_tape(loss);
  REQUIRE_FALSE(tape.empty());
  CHECK(tape.back().output == loss.id());
  std::unordered_map<const void*, std::size_t> position;
  for (std::size_t i = 0; i < tape.size(); ++i) position[tape[i].output] = i;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (const void* in : tape[i].inputs) {
      REQUIRE(position.count(in));
      CHECK(position[in] < i);
    }
  }
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(8);
  const Tensor a0 = random_tensor({4, 5}, rng);
  const Tensor b0 = random_tensor({5, 3}, rng);
  auto run = [&] {
    Tensor a = a0.detach();
    Tensor b = b0.detach();
    a.set_requires_grad();
    b.set_requires_grad();
    mean(softmax_lastdim(tanh(matmul(a, b)))).backward();
    return std::make_pair(a.grad(), b.grad());
  };
  CHECK(run() == run());
}

TEST_CASE("finite_diff_check examples") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({3, 4}, rng);
  const auto r_sum = finite_diff_check([](const Tensor& t) { return sum(t); }, x, 1e-4);
  CHECK(r_sum.passed);
  CHECK(r_sum.max_rel_error <= 1e-9);

  // Softmax rows sum to a constant, so the true gradient is zero and the
  // absolute fallback decides.
  const auto r_soft = finite_diff_check([](const Tensor& t) { return sum(softmax_lastdim(t)); }, x, 1e-4);
  CHECK(r_soft.passed);
  CHECK(r_soft.max_abs_error <= 1e-7);

  // A function that blows up under perturbation is reported as an oracle failure.
  const Tensor at_zero = Tensor::from({1}, {0.0});
  const auto r_bad = finite_diff_check(
      [](const Tensor& t) {
        if (grad_enabled()) return sum(t);
        return Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
      },
      at_zero, 1e-4);
  CHECK_FALSE(r_bad.passed);
  CHECK(r_bad.oracle_failure);
}

TEST_CASE("dropout keeps expectation and is identity at zero") {
  std::mt19937_64 rng(4);
  const Tensor x = Tensor::ones({20000});
  CHECK(dropout(x, 0.0, rng).id() == x.id());
  const Tensor y = dropout(x, 0.25, rng);
  double total = 0.0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
    total += v;
  }
  CHECK(total / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
}
