#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto an immutable node. Operations on tensors
// that require gradients record their inputs and a backward rule on the
// output node; backward() linearises the recorded graph into a tape in
// topological order and replays it in reverse.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tfbench {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Returns grad, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor();

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Direct write access. Only valid on leaves; tensors produced by recorded
  // operations are never mutated in place.
  std::span<double> mutable_data();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; zeros if no backward pass has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  // Backpropagates from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  // Same values, detached from any recorded history.
  Tensor detach() const;

  // Identity of the underlying node.
  const void* id() const { return node_.get(); }

  // Internal: used by operation implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

struct TapeEntry {
  std::string op;
  const void* output;
  std::vector<const void*> inputs;
};

// Recorded operations reachable from `root`, inputs before outputs.
using ComputationTape = std::vector<TapeEntry>;
ComputationTape record_tape(const Tensor& root);

}  // namespace tfbench
