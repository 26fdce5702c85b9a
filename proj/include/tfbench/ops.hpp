#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tfbench/tensor.hpp"

namespace tfbench {

// Batched matrix product over the last two axes. Leading batch axes
// broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary ops. Shapes must be equal, or one operand's shape must be a suffix
// of the other's (it is then repeated over the leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& t, double factor);
Tensor relu(const Tensor& t);
Tensor gelu(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor sigmoid(const Tensor& t);

// Softmax over the last axis. -inf entries map to exactly zero weight; a
// slice that is entirely -inf raises DegenerateMaskError.
Tensor softmax_lastdim(const Tensor& t);

Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
// Mean over one axis, which is removed from the shape.
Tensor mean_axis(const Tensor& t, std::size_t axis);

Tensor reshape(const Tensor& t, const Shape& shape);
Tensor transpose(const Tensor& t, std::size_t axis_a, std::size_t axis_b);
Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& t, double p, std::mt19937_64& rng);

Tensor mse_loss(const Tensor& prediction, const Tensor& target);

enum class Elementwise { relu, gelu, tanh, sigmoid, add, mul, scale };

// Dispatch by kind; `b` is ignored for unary kinds and `factor` only used by
// scale.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = Tensor(), double factor = 1.0);

}  // namespace tfbench
