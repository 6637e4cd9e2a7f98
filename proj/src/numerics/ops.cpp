#include <algorithm>
#include <cmath>
#include <numbers>

#include "prmim/errors.hpp"
#include "prmim/tensor.hpp"

namespace prmim {

namespace {

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->leaf = false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input i, or nullptr when it does not need one.
std::vector<double>* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor argument");
}

void check_rank(const Tensor& t, std::size_t rank, const char* op) {
  check_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(t.shape()));
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_defined(a, op);
  check_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t, const char* op) {
  check_defined(t, op);
  if (t.rank() == 0) throw DimensionError(std::string(op) + ": needs rank >= 1");
  return t.shape().back();
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& G = self.grad;
    const auto& A = self.inputs[0]->data;
    const auto& B = self.inputs[1]->data;
    if (auto* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += acc;
        }
    }
    if (auto* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto* ga = input_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto A = a.data(), B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = input_grad(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto A = a.data(), B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = input_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto A = a.data(), B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.inputs[0]->data;
    const auto& B = self.inputs[1]->data;
    if (auto* g = input_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * B[i];
    if (auto* g = input_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * A[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  check_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = last_dim(x, "add_bias");
  check_rank(bias, 1, "add_bias");
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto B = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % n];
  return make_result(x.shape(), std::move(out), {x, bias}, [n](Node& self) {
    if (auto* g = input_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    auto* g = input_grad(self, 0);
    for (double& v : *g) v += self.grad[0];
  });
}

Tensor gelu(const Tensor& x) {
  check_defined(x, "gelu");
  std::vector<double> out(x.numel());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * std_normal_cdf(X[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    const auto& X = self.inputs[0]->data;
    auto* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double d = std_normal_cdf(X[i]) + X[i] * std_normal_pdf(X[i]);
      (*g)[i] += self.grad[i] * d;
    }
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = last_dim(x, "softmax");
  const std::size_t rows = n ? x.numel() / n : 0;
  std::vector<double> out(x.numel());
  const auto X = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = X.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [n, rows](Node& self) {
    auto* g = input_grad(self, 0);
    const auto& Y = self.data;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[r * n + j] * Y[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        (*g)[r * n + j] += Y[r * n + j] * (self.grad[r * n + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = last_dim(x, "layer_norm");
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  if (gamma.defined() != beta.defined()) {
    throw UsageError("layer_norm: gamma and beta must both be given or both omitted");
  }
  const bool affine = gamma.defined();
  if (affine) {
    check_rank(gamma, 1, "layer_norm");
    check_rank(beta, 1, "layer_norm");
    if (gamma.dim(0) != n || beta.dim(0) != n) {
      throw DimensionError("layer_norm: affine parameters " + shape_str(gamma.shape()) + "/" +
                           shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
    }
  }
  const std::size_t rows = n ? x.numel() / n : 0;
  const auto X = x.data();
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = X.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) normalized[r * n + j] = (in[j] - mean) * inv_std[r];
  }
  std::vector<double> out = normalized;
  if (affine) {
    const auto G = gamma.data(), B = beta.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * G[i % n] + B[i % n];
  }
  std::vector<Tensor> inputs{x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return make_result(
      x.shape(), std::move(out), std::move(inputs),
      [n, rows, affine, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        const double* gamma_data = affine ? self.inputs[1]->data.data() : nullptr;
        if (auto* gx = input_grad(self, 0)) {
          std::vector<double> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = self.grad[r * n + j] * (affine ? gamma_data[j] : 1.0);
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * normalized[r * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              (*gx)[r * n + j] +=
                  inv_std[r] * (dxhat[j] - mean_d - normalized[r * n + j] * mean_dx);
            }
          }
        }
        if (!affine) return;
        if (auto* gg = input_grad(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            (*gg)[i % n] += self.grad[i] * normalized[i];
        if (auto* gb = input_grad(self, 2))
          for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % n] += self.grad[i];
      });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse");
  const std::size_t count = pred.numel();
  if (count == 0) throw UsageError("mse: empty tensors");
  const auto P = pred.data(), T = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) s += (P[i] - T[i]) * (P[i] - T[i]);
  const double inv = 1.0 / static_cast<double>(count);
  // The target is a constant: only the prediction is recorded as an input.
  std::vector<double> target_copy(T.begin(), T.end());
  return make_result({}, {s * inv}, {pred}, [inv, target_copy = std::move(target_copy)](Node& self) {
    auto* g = input_grad(self, 0);
    const auto& P = self.inputs[0]->data;
    const double up = self.grad[0] * 2.0 * inv;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += up * (P[i] - target_copy[i]);
  });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  check_rank(x, 3, "depthwise_conv2d");
  check_rank(kernel, 3, "depthwise_conv2d");
  check_rank(bias, 1, "depthwise_conv2d");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), k = kernel.dim(1);
  if (k % 2 == 0) throw ParameterError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(0) != C || kernel.dim(2) != k || bias.dim(0) != C) {
    throw DimensionError("depthwise_conv2d: kernel " + shape_str(kernel.shape()) + " / bias " +
                         shape_str(bias.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  const long r = static_cast<long>(k / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  const auto X = x.data(), K = kernel.data(), B = bias.data();
  std::vector<double> out(C * H * W);
  // Visits every in-bounds (output, input, tap) triple of channel c.
  auto for_taps = [=](std::size_t c, auto&& fn) {
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j)
        for (long u = 0; u < static_cast<long>(k); ++u) {
          const long ii = i + u - r;
          if (ii < 0 || ii >= h) continue;
          for (long v = 0; v < static_cast<long>(k); ++v) {
            const long jj = j + v - r;
            if (jj < 0 || jj >= w) continue;
            fn(c * H * W + static_cast<std::size_t>(i * w + j),
               c * H * W + static_cast<std::size_t>(ii * w + jj),
               c * k * k + static_cast<std::size_t>(u) * k + static_cast<std::size_t>(v));
          }
        }
  };
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < H * W; ++p) out[c * H * W + p] = B[c];
    for_taps(c, [&](std::size_t o, std::size_t in, std::size_t t) { out[o] += K[t] * X[in]; });
  }
  return make_result(x.shape(), std::move(out), {x, kernel, bias}, [C, H, W, for_taps](Node& self) {
    const auto& X = self.inputs[0]->data;
    const auto& K = self.inputs[1]->data;
    const auto& G = self.grad;
    auto* gx = input_grad(self, 0);
    auto* gk = input_grad(self, 1);
    auto* gb = input_grad(self, 2);
    for (std::size_t c = 0; c < C; ++c) {
      if (gb)
        for (std::size_t p = 0; p < H * W; ++p) (*gb)[c] += G[c * H * W + p];
      if (gx || gk) {
        for_taps(c, [&](std::size_t o, std::size_t in, std::size_t t) {
          if (gx) (*gx)[in] += G[o] * K[t];
          if (gk) (*gk)[t] += G[o] * X[in];
        });
      }
    }
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t kernel_size) {
  check_rank(x, 3, "avg_pool2d");
  if (kernel_size % 2 == 0) throw ParameterError("avg_pool2d: kernel size must be odd");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const long r = static_cast<long>(kernel_size / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);
  const double inv = 1.0 / static_cast<double>(kernel_size * kernel_size);
  auto for_window = [=](auto&& fn) {
    for (std::size_t c = 0; c < C; ++c)
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j)
          for (long ii = std::max(0L, i - r); ii <= std::min(h - 1, i + r); ++ii)
            for (long jj = std::max(0L, j - r); jj <= std::min(w - 1, j + r); ++jj)
              fn(c * H * W + static_cast<std::size_t>(i * w + j),
                 c * H * W + static_cast<std::size_t>(ii * w + jj));
  };
  const auto X = x.data();
  std::vector<double> out(x.numel(), 0.0);
  for_window([&](std::size_t o, std::size_t in) { out[o] += X[in] * inv; });
  return make_result(x.shape(), std::move(out), {x}, [for_window, inv](Node& self) {
    auto* g = input_grad(self, 0);
    for_window([&](std::size_t o, std::size_t in) { (*g)[in] += self.grad[o] * inv; });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto* g = input_grad(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  check_rank(x, 2, "gather_rows");
  const std::size_t m = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * d);
  const auto X = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                           shape_str(x.shape()));
    }
    std::copy_n(X.data() + idx[r] * d, d, out.data() + r * d);
  }
  const std::size_t count = idx.size();
  return make_result({count, d}, std::move(out), {x}, [d, idx = std::move(idx)](Node& self) {
    auto* g = input_grad(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) (*g)[idx[r] * d + j] += self.grad[r * d + j];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const std::size_t d = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_rows");
    if (p.dim(1) != d) {
      throw DimensionError("concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    offsets.push_back(rows * d);
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({rows, d}, std::move(out), {parts.begin(), parts.end()},
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t k = 0; k < offsets.size(); ++k)
                         if (auto* g = input_grad(self, k))
                           for (std::size_t i = 0; i < g->size(); ++i)
                             (*g)[i] += self.grad[offsets[k] + i];
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::size_t width = 0;
  std::vector<std::size_t> col_offsets, widths;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: height mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    col_offsets.push_back(width);
    widths.push_back(p.dim(1));
    width += p.dim(1);
  }
  std::vector<double> out(m * width);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto P = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(P.data() + i * widths[k], widths[k], out.data() + i * width + col_offsets[k]);
  }
  return make_result({m, width}, std::move(out), {parts.begin(), parts.end()},
                     [m, width, col_offsets = std::move(col_offsets), widths = std::move(widths)](Node& self) {
                       for (std::size_t k = 0; k < widths.size(); ++k)
                         if (auto* g = input_grad(self, k))
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               (*g)[i * widths[k] + j] += self.grad[i * width + col_offsets[k] + j];
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  check_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + shape_str(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(X.data() + i * n + start, count, out.data() + i * count);
  return make_result({m, count}, std::move(out), {x}, [m, n, start, count](Node& self) {
    auto* g = input_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) (*g)[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor broadcast_rows(const Tensor& v, std::size_t count) {
  check_defined(v, "broadcast_rows");
  const bool row_vector = v.rank() == 2 && v.dim(0) == 1;
  if (v.rank() != 1 && !row_vector) {
    throw DimensionError("broadcast_rows: expected [D] or [1xD], got " + shape_str(v.shape()));
  }
  const std::size_t d = v.numel();
  std::vector<double> out(count * d);
  for (std::size_t r = 0; r < count; ++r) std::copy_n(v.data().data(), d, out.data() + r * d);
  return make_result({count, d}, std::move(out), {v}, [count, d](Node& self) {
    auto* g = input_grad(self, 0);
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[r * d + j];
  });
}

Tensor assemble_rows(std::size_t rows, std::span<const RowPlacement> parts) {
  if (parts.empty()) throw UsageError("assemble_rows: no inputs");
  const std::size_t d = parts[0].source.dim(1);
  std::vector<double> out(rows * d, 0.0);
  std::vector<char> taken(rows, 0);
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> targets;
  for (const auto& part : parts) {
    check_rank(part.source, 2, "assemble_rows");
    if (part.source.dim(1) != d || part.source.dim(0) != part.targets.size()) {
      throw DimensionError("assemble_rows: source " + shape_str(part.source.shape()) +
                           " does not match " + std::to_string(part.targets.size()) +
                           " targets of width " + std::to_string(d));
    }
    const auto S = part.source.data();
    for (std::size_t r = 0; r < part.targets.size(); ++r) {
      const std::size_t t = part.targets[r];
      if (t >= rows || taken[t]) {
        throw DimensionError("assemble_rows: target row " + std::to_string(t) +
                             " out of range or assigned twice");
      }
      taken[t] = 1;
      std::copy_n(S.data() + r * d, d, out.data() + t * d);
    }
    inputs.push_back(part.source);
    targets.push_back(part.targets);
  }
  return make_result({rows, d}, std::move(out), std::move(inputs),
                     [d, targets = std::move(targets)](Node& self) {
                       for (std::size_t k = 0; k < targets.size(); ++k)
                         if (auto* g = input_grad(self, k))
                           for (std::size_t r = 0; r < targets[k].size(); ++r)
                             for (std::size_t j = 0; j < d; ++j)
                               (*g)[r * d + j] += self.grad[targets[k][r] * d + j];
                     });
}

}  // namespace prmim
