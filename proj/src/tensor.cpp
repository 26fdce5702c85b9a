#include "tfbench/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "tfbench/errors.hpp"

namespace tfbench {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->shape = {1};
  node_->data = {0.0};
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return from(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor needs at least one dimension");
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf) throw ContractError("cannot mutate a tensor produced by a recorded operation");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != dim()) throw ShapeError("index rank does not match " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

namespace {

// Post-order DFS over recorded nodes that require grad.
std::vector<detail::Node*> topological_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  auto order = topological_order(node_.get());
  for (auto* node : order) {
    if (!node->is_leaf) node->grad.assign(node->data.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

ComputationTape record_tape(const Tensor& root) {
  ComputationTape tape;
  if (!root.requires_grad()) return tape;
  for (auto* node : topological_order(root.node().get())) {
    TapeEntry entry{node->op, node, {}};
    for (const auto& in : node->inputs) entry.inputs.push_back(in.get());
    tape.push_back(std::move(entry));
  }
  return tape;
}

}  // namespace tfbench
