#include "tfbench/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tfbench/errors.hpp"

namespace tfbench {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Builds an output tensor; records inputs and the backward rule only when a
// grad-requiring input exists and recording is enabled.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->is_leaf = false;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const Tensor& a_in, const Tensor& b_in) {
  // Normalise so that `a` is the larger operand; sub is not commutative so
  // remember whether the operands were swapped.
  bool swapped = false;
  const Tensor* a = &a_in;
  const Tensor* b = &b_in;
  if (a_in.shape() != b_in.shape()) {
    if (is_suffix(b_in.shape(), a_in.shape())) {
    } else if (is_suffix(a_in.shape(), b_in.shape())) {
      std::swap(a, b);
      swapped = true;
    } else {
      throw ShapeError("incompatible shapes " + shape_str(a_in.shape()) + " and " + shape_str(b_in.shape()));
    }
  }
  const auto& ad = a->data();
  const auto& bd = b->data();
  const std::size_t n = ad.size();
  const std::size_t m = bd.size();
  std::vector<double> out(n);
  const char* name = "add";
  // The small operand repeats every m elements of the large one.
  for (std::size_t base = 0; base < n; base += m) {
    const double* x = ad.data() + base;
    double* y = out.data() + base;
    switch (kind) {
      case BinaryKind::add:
        for (std::size_t j = 0; j < m; ++j) y[j] = x[j] + bd[j];
        break;
      case BinaryKind::sub:
        name = "sub";
        if (swapped) {
          for (std::size_t j = 0; j < m; ++j) y[j] = bd[j] - x[j];
        } else {
          for (std::size_t j = 0; j < m; ++j) y[j] = x[j] - bd[j];
        }
        break;
      case BinaryKind::mul:
        name = "mul";
        for (std::size_t j = 0; j < m; ++j) y[j] = x[j] * bd[j];
        break;
    }
  }
  // Signs of the big/small contributions for sub.
  const double sign_big = (kind == BinaryKind::sub && swapped) ? -1.0 : 1.0;
  const double sign_small = (kind == BinaryKind::sub && !swapped) ? -1.0 : 1.0;
  return make_result(name, a->shape(), std::move(out), {a->node(), b->node()},
                     [kind, n, m, sign_big, sign_small](Node& self) {
                       Node& big = *self.inputs[0];
                       Node& small = *self.inputs[1];
                       const auto& g = self.grad;
                       if (kind == BinaryKind::mul) {
                         if (big.requires_grad) {
                           auto& gb = big.grad_buffer();
                           for (std::size_t base = 0; base < n; base += m)
                             for (std::size_t j = 0; j < m; ++j) gb[base + j] += g[base + j] * small.data[j];
                         }
                         if (small.requires_grad) {
                           auto& gs = small.grad_buffer();
                           for (std::size_t base = 0; base < n; base += m)
                             for (std::size_t j = 0; j < m; ++j) gs[j] += g[base + j] * big.data[base + j];
                         }
                         return;
                       }
                       if (big.requires_grad) {
                         auto& gb = big.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) gb[i] += sign_big * g[i];
                       }
                       if (small.requires_grad) {
                         auto& gs = small.grad_buffer();
                         for (std::size_t base = 0; base < n; base += m)
                           for (std::size_t j = 0; j < m; ++j) gs[j] += sign_small * g[base + j];
                       }
                     });
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& t, Fwd fwd, Deriv deriv) {
  const auto& x = t.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(name, t.shape(), std::move(out), {t.node()}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    auto& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * deriv(in.data[i], self.data[i]);
  });
}

// Broadcast metadata for the batch axes of a matmul operand.
struct BatchLayout {
  Shape out_batch;
  std::vector<std::size_t> a_offsets;
  std::vector<std::size_t> b_offsets;
};

BatchLayout batch_layout(const Shape& a, const Shape& b, std::size_t a_mat, std::size_t b_mat) {
  const Shape ab(a.begin(), a.end() - 2);
  const Shape bb(b.begin(), b.end() - 2);
  const std::size_t rank = std::max(ab.size(), bb.size());
  BatchLayout layout;
  layout.out_batch.assign(rank, 1);
  std::vector<std::size_t> a_stride(rank, 0), b_stride(rank, 0);
  std::size_t sa = a_mat, sb = b_mat;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t axis = rank - 1 - r;
    const std::size_t da = r < ab.size() ? ab[ab.size() - 1 - r] : 1;
    const std::size_t db = r < bb.size() ? bb[bb.size() - 1 - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("matmul batch dimensions not broadcastable: " + shape_str(a) + " and " + shape_str(b));
    }
    layout.out_batch[axis] = std::max(da, db);
    a_stride[axis] = da == 1 ? 0 : sa;
    b_stride[axis] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  const std::size_t count = shape_numel(layout.out_batch);
  layout.a_offsets.resize(count);
  layout.b_offsets.resize(count);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t axis = 0; axis < rank; ++axis) {
      oa += idx[axis] * a_stride[axis];
      ob += idx[axis] * b_stride[axis];
    }
    layout.a_offsets[c] = oa;
    layout.b_offsets[c] = ob;
    for (std::size_t axis = rank; axis-- > 0;) {
      if (++idx[axis] < layout.out_batch[axis]) break;
      idx[axis] = 0;
    }
  }
  return layout;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || b.dim() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[a.dim() - 2];
  const std::size_t k = a.shape()[a.dim() - 1];
  const std::size_t k2 = b.shape()[b.dim() - 2];
  const std::size_t n = b.shape()[b.dim() - 1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }

  // Common case: a right operand without batch axes folds the whole batch
  // into a single GEMM.
  if (b.dim() == 2) {
    const std::size_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<double> out(rows * n);
    MutMap(out.data(), rows, n).noalias() = ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, n);
    return make_result("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                       [rows, k, n](Node& self) {
                         Node& an = *self.inputs[0];
                         Node& bn = *self.inputs[1];
                         ConstMap g(self.grad.data(), rows, n);
                         if (an.requires_grad) {
                           MutMap(an.grad_buffer().data(), rows, k).noalias() +=
                               g * ConstMap(bn.data.data(), k, n).transpose();
                         }
                         if (bn.requires_grad) {
                           MutMap(bn.grad_buffer().data(), k, n).noalias() +=
                               ConstMap(an.data.data(), rows, k).transpose() * g;
                         }
                       });
  }

  auto layout = std::make_shared<BatchLayout>(batch_layout(a.shape(), b.shape(), m * k, k * n));
  Shape out_shape = layout->out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::size_t count = layout->a_offsets.size();
  std::vector<double> out(count * m * n);
  for (std::size_t c = 0; c < count; ++c) {
    MutMap(out.data() + c * m * n, m, n).noalias() = ConstMap(a.data().data() + layout->a_offsets[c], m, k) *
                                                     ConstMap(b.data().data() + layout->b_offsets[c], k, n);
  }
  return make_result("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                     [layout, m, k, n](Node& self) {
                       Node& an = *self.inputs[0];
                       Node& bn = *self.inputs[1];
                       const std::size_t count = layout->a_offsets.size();
                       for (std::size_t c = 0; c < count; ++c) {
                         ConstMap g(self.grad.data() + c * m * n, m, n);
                         if (an.requires_grad) {
                           MutMap(an.grad_buffer().data() + layout->a_offsets[c], m, k).noalias() +=
                               g * ConstMap(bn.data.data() + layout->b_offsets[c], k, n).transpose();
                         }
                         if (bn.requires_grad) {
                           MutMap(bn.grad_buffer().data() + layout->b_offsets[c], k, n).noalias() +=
                               ConstMap(an.data.data() + layout->a_offsets[c], m, k).transpose() * g;
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b); }

Tensor scale(const Tensor& t, double factor) {
  return unary(
      "scale", t, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& t) {
  return unary(
      "relu", t, [](double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& t) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", t, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor tanh(const Tensor& t) {
  return unary(
      "tanh", t, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& t) {
  return unary(
      "sigmoid", t,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax_lastdim(const Tensor& t) {
  const std::size_t width = t.shape().back();
  const std::size_t rows = t.numel() / width;
  const auto& x = t.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double* yr = out.data() + r * width;
    const double mx = *std::max_element(xr, xr + width);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateMaskError("softmax row " + std::to_string(r) + " is entirely masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
  }
  return make_result("softmax", t.shape(), std::move(out), {t.node()}, [rows, width](Node& self) {
    auto& gi = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * width;
      const double* g = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) gi[r * width + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t width = t.shape().back();
  if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
    throw ShapeError("layer_norm gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match last dimension of " + shape_str(t.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm eps must be positive");
  const std::size_t rows = t.numel() / width;
  const auto& x = t.data();
  const auto& g = gain.data();
  const auto& b = bias.data();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(width);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * width + j] = h;
      out[r * width + j] = h * g[j] + b[j];
    }
  }
  return make_result("layer_norm", t.shape(), std::move(out), {t.node(), gain.node(), bias.node()},
                     [rows, width, xhat, rstd](Node& self) {
                       Node& xn = *self.inputs[0];
                       Node& gn = *self.inputs[1];
                       Node& bn = *self.inputs[2];
                       const double inv_w = 1.0 / static_cast<double>(width);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * width;
                         const double* h = xhat->data() + r * width;
                         if (gn.requires_grad) {
                           auto& gg = gn.grad_buffer();
                           for (std::size_t j = 0; j < width; ++j) gg[j] += dy[j] * h[j];
                         }
                         if (bn.requires_grad) {
                           auto& gb = bn.grad_buffer();
                           for (std::size_t j = 0; j < width; ++j) gb[j] += dy[j];
                         }
                         if (xn.requires_grad) {
                           double mean_dh = 0.0, mean_dh_h = 0.0;
                           for (std::size_t j = 0; j < width; ++j) {
                             const double dh = dy[j] * gn.data[j];
                             mean_dh += dh;
                             mean_dh_h += dh * h[j];
                           }
                           mean_dh *= inv_w;
                           mean_dh_h *= inv_w;
                           auto& gx = xn.grad_buffer();
                           for (std::size_t j = 0; j < width; ++j) {
                             const double dh = dy[j] * gn.data[j];
                             gx[r * width + j] += (*rstd)[r] * (dh - mean_dh - h[j] * mean_dh_h);
                           }
                         }
                       }
                     });
}

Tensor sum(const Tensor& t) {
  double total = 0.0;
  for (double v : t.data()) total += v;
  return make_result("sum", {1}, {total}, {t.node()}, [](Node& self) {
    auto& gi = self.inputs[0]->grad_buffer();
    for (auto& v : gi) v += self.grad[0];
  });
}

Tensor mean(const Tensor& t) {
  double total = 0.0;
  for (double v : t.data()) total += v;
  const double inv = 1.0 / static_cast<double>(t.numel());
  return make_result("mean", {1}, {total * inv}, {t.node()}, [inv](Node& self) {
    auto& gi = self.inputs[0]->grad_buffer();
    for (auto& v : gi) v += self.grad[0] * inv;
  });
}

Tensor mean_axis(const Tensor& t, std::size_t axis) {
  if (axis >= t.dim()) throw ShapeError("mean_axis axis out of range for " + shape_str(t.shape()));
  const auto& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  const double inv = 1.0 / static_cast<double>(len);
  const auto& x = t.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = x.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : out) v *= inv;
  return make_result("mean_axis", std::move(out_shape), std::move(out), {t.node()},
                     [outer, len, inner, inv](Node& self) {
                       auto& gi = self.inputs[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t l = 0; l < len; ++l) {
                           for (std::size_t i = 0; i < inner; ++i) {
                             gi[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
                           }
                         }
                       }
                     });
}

Tensor reshape(const Tensor& t, const Shape& shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("cannot reshape " + shape_str(t.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(t.data().begin(), t.data().end());
  return make_result("reshape", shape, std::move(out), {t.node()}, [](Node& self) {
    auto& gi = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& t, std::size_t axis_a, std::size_t axis_b) {
  const auto& s = t.shape();
  if (axis_a >= s.size() || axis_b >= s.size()) {
    throw ShapeError("transpose axes out of range for " + shape_str(s));
  }
  if (axis_a == axis_b) return reshape(t, s);
  Shape out_shape = s;
  std::swap(out_shape[axis_a], out_shape[axis_b]);
  // View the input as [outer, A, mid, B, inner] and swap the A and B axes.
  const std::size_t lo = std::min(axis_a, axis_b), hi = std::max(axis_a, axis_b);
  std::size_t outer = 1, mid = 1, inner = 1;
  for (std::size_t i = 0; i < lo; ++i) outer *= s[i];
  for (std::size_t i = lo + 1; i < hi; ++i) mid *= s[i];
  for (std::size_t i = hi + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t na = s[lo], nb = s[hi];
  // Calls f(out_offset, in_offset) for every contiguous run of `inner` values.
  auto for_each_run = [=](auto&& f) {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < nb; ++j)
        for (std::size_t m = 0; m < mid; ++m)
          for (std::size_t i = 0; i < na; ++i) {
            const std::size_t out_off = (((o * nb + j) * mid + m) * na + i) * inner;
            const std::size_t in_off = (((o * na + i) * mid + m) * nb + j) * inner;
            f(out_off, in_off);
          }
  };
  const auto& x = t.data();
  std::vector<double> out(x.size());
  for_each_run([&](std::size_t po, std::size_t pi) { std::copy_n(x.data() + pi, inner, out.data() + po); });
  return make_result("transpose", std::move(out_shape), std::move(out), {t.node()},
                     [for_each_run, inner](Node& self) {
                       auto& gi = self.inputs[0]->grad_buffer();
                       for_each_run([&](std::size_t po, std::size_t pi) {
                         for (std::size_t k = 0; k < inner; ++k) gi[pi + k] += self.grad[po + k];
                       });
                     });
}

Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& s = t.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                     std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  const auto& x = t.data();
  std::vector<double> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + (o * len + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return make_result("slice", std::move(out_shape), std::move(out), {t.node()},
                     [outer, len, inner, start, length](Node& self) {
                       auto& gi = self.inputs[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         double* dst = gi.data() + (o * len + start) * inner;
                         const double* src = self.grad.data() + o * length * inner;
                         for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) throw ShapeError("concat rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat shapes " + shape_str(p.shape()) + " and " + shape_str(first) + " differ");
    total += p.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<std::size_t> lens;
  std::vector<NodePtr> inputs;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * len * inner, len * inner, out.data() + (o * total + offset) * inner);
    }
    offset += len;
    lens.push_back(len);
    inputs.push_back(p.node());
  }
  return make_result("concat", std::move(out_shape), std::move(out), std::move(inputs),
                     [outer, inner, total, lens](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < lens.size(); ++k) {
                         Node& in = *self.inputs[k];
                         const std::size_t len = lens[k];
                         if (in.requires_grad) {
                           auto& gi = in.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + (o * total + offset) * inner;
                             double* dst = gi.data() + o * len * inner;
                             for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                           }
                         }
                         offset += len;
                       }
                     });
}

Tensor dropout(const Tensor& t, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout probability must be in [0, 1)");
  if (p == 0.0) return t;
  const double keep = 1.0 - p;
  // One 32-bit uniform per element, two per engine draw.
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(keep, 32));
  auto mask = std::make_shared<std::vector<double>>(t.numel());
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < mask->size(); ++i) {
    if (i % 2 == 0) bits = rng();
    const std::uint64_t u = (i % 2 == 0) ? (bits & 0xffffffffu) : (bits >> 32);
    (*mask)[i] = u < threshold ? 1.0 / keep : 0.0;
  }
  const auto& x = t.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (*mask)[i];
  return make_result("dropout", t.shape(), std::move(out), {t.node()}, [mask](Node& self) {
    auto& gi = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss shapes " + shape_str(prediction.shape()) + " and " + shape_str(target.shape()) +
                     " differ");
  }
  const Tensor diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b, double factor) {
  switch (kind) {
    case Elementwise::relu:
      return relu(a);
    case Elementwise::gelu:
      return gelu(a);
    case Elementwise::tanh:
      return tanh(a);
    case Elementwise::sigmoid:
      return sigmoid(a);
    case Elementwise::add:
      if (a.shape() != b.shape()) throw ShapeError("elementwise add needs equal shapes");
      return add(a, b);
    case Elementwise::mul:
      if (a.shape() != b.shape()) throw ShapeError("elementwise mul needs equal shapes");
      return mul(a, b);
    case Elementwise::scale:
      return scale(a, factor);
  }
  throw ContractError("unknown elementwise kind");
}

}  // namespace tfbench
