#include "prmim/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "prmim/errors.hpp"

namespace prmim {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& require(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw UsageError("operation on an undefined tensor");
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{}, std::vector<double>{value}, requires_grad));
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return require(node_).data.size(); }

std::span<const double> Tensor::data() const { return require(node_).data; }

double Tensor::item() const {
  const auto& n = require(node_);
  if (n.data.size() != 1) throw UsageError("item() on tensor of shape " + shape_str(n.shape));
  return n.data[0];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

bool Tensor::is_leaf() const { return require(node_).leaf; }

std::vector<double> Tensor::grad() const {
  const auto& n = require(node_);
  if (n.grad.empty()) return std::vector<double>(n.data.size(), 0.0);
  return n.grad;
}

bool Tensor::has_grad() const { return !require(node_).grad.empty(); }

void Tensor::zero_grad() {
  require(node_);
  node_->grad.clear();
}

std::span<double> Tensor::mutable_data() {
  require(node_);
  if (!node_->leaf) throw UsageError("mutable_data() is only available on leaf tensors");
  return node_->data;
}

Tensor Tensor::detach() const {
  const auto& n = require(node_);
  return Tensor(make_leaf(n.shape, n.data, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  const auto& n = require(node_);
  return Tensor(make_leaf(n.shape, n.data, requires_grad));
}

namespace {

// Iterative post-order DFS; returns differentiable nodes inputs-first.
std::vector<detail::Node*> topological_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  if (!root->requires_grad) return order;
  std::unordered_set<const detail::Node*> visited;
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
  auto& root = const_cast<detail::Node&>(require(node_));
  if (root.data.size() != 1 || !root.shape.empty()) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
  }
  const auto order = topological_order(&root);
  for (detail::Node* n : order) {
    if (!n->leaf) n->grad.clear();
  }
  if (order.empty()) return;
  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf || !n->backward || n->grad.empty()) continue;
    n->backward(*n);
  }
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  for (detail::Node* n : topological_order(root.node_ptr().get())) {
    TapeEntry entry;
    entry.output = n;
    for (const auto& in : n->inputs) entry.inputs.push_back(in.get());
    tape.entries_.push_back(std::move(entry));
  }
  return tape;
}

bool Tape::is_topological() const {
  std::unordered_map<const detail::Node*, std::size_t> position;
  for (std::size_t i = 0; i < entries_.size(); ++i) position.emplace(entries_[i].output, i);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (const detail::Node* in : entries_[i].inputs) {
      auto it = position.find(in);
      if (it == position.end()) {
        // Inputs outside the tape must be constants (they carry no gradient).
        if (in->requires_grad) return false;
        continue;
      }
      if (it->second >= i) return false;
    }
  }
  return true;
}

}  // namespace prmim
