#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prmim {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// One vertex of the dynamically recorded computation graph. Non-leaf nodes
// keep references to their inputs and a rule that pushes this node's gradient
// into them. Nodes that do not require a gradient keep neither.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an attached reverse-mode record.
///
/// A Tensor is a cheap handle: copies share the underlying node. Operations
/// never mutate their inputs; only leaves expose mutable storage, which is
/// what optimizers update in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;

  // Accumulated gradient; all zeros when nothing has reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // In-place access to a leaf's values. Throws UsageError on non-leaves.
  std::span<double> mutable_data();

  // New leaf sharing no state with this tensor.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  // Reverse-mode sweep from this scalar. Gradients accumulate into leaves
  // that require them; intermediate gradients are reset on each call.
  void backward() const;

  const detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

struct TapeEntry {
  const detail::Node* output = nullptr;
  std::vector<const detail::Node*> inputs;
};

/// Operations reachable from a root in topological order (inputs first).
/// Only nodes that participate in differentiation are recorded.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<const TapeEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool is_topological() const;

 private:
  std::vector<TapeEntry> entries_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[m, k] * weight[k, n] + bias[n]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x);
// Pass undefined gamma/beta for a normalization without affine transform.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
Tensor mse(const Tensor& pred, const Tensor& target);

// x[C, H, W], kernel[C, k, k], bias[C]; zero padding keeps H x W.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// Parameter-free k x k mean over a zero-padded window (divisor k*k).
Tensor avg_pool2d(const Tensor& x, std::size_t kernel_size);

Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
// v[D] or v[1, D] repeated into [count, D].
Tensor broadcast_rows(const Tensor& v, std::size_t count);

struct RowPlacement {
  Tensor source;                     // [m, D]
  std::vector<std::size_t> targets;  // m destination rows
};
// [rows, D] with each source row written to its target; untouched rows are 0.
Tensor assemble_rows(std::size_t rows, std::span<const RowPlacement> parts);

}  // namespace prmim
