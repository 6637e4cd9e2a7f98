#pragma once

// Finite-difference checks over every differentiable op, one entry per op.

#include <string>
#include <utility>
#include <vector>

#include "prmim/tensor.hpp"
#include "support/gradcheck.hpp"

namespace prmim::testing {

struct OpCheck {
  std::string op;
  GradCheckResult result;
};

inline std::vector<OpCheck> op_gradchecks(std::uint64_t s) {
  auto a = random_tensor({3, 4}, s);
  auto b = random_tensor({4, 2}, s + 1);
  auto c = random_tensor({3, 4}, s + 2);
  auto bias = random_tensor({4}, s + 3);
  auto target = random_tensor({3, 4}, s + 4, false);
  auto wsum = random_tensor({3, 4}, s + 5, false);
  // Weighted sum so every output coordinate gets a distinct upstream gradient.
  auto reduce = [&](const Tensor& t) {
    auto w = random_tensor(t.shape(), s + 6, false);
    return sum(mul(t, w));
  };
  auto gamma = random_tensor({4}, s + 7);
  auto beta = random_tensor({4}, s + 8);
  auto img = random_tensor({2, 4, 5}, s + 9);
  auto kern = random_tensor({2, 3, 3}, s + 10);
  auto kb = random_tensor({2}, s + 11);
  const std::vector<std::size_t> rows{2, 0, 2};
  std::vector<Tensor> parts{a, c};

  std::vector<OpCheck> out;
  auto run = [&](std::string op, std::vector<Tensor> leaves, const std::function<Tensor()>& f) {
    out.push_back({std::move(op), gradcheck(std::move(leaves), f)});
  };
  run("matmul", {a, b}, [&] { return reduce(matmul(a, b)); });
  run("transpose", {a}, [&] { return reduce(transpose(a)); });
  run("add", {a, c}, [&] { return reduce(add(a, c)); });
  run("sub", {a, c}, [&] { return reduce(sub(a, c)); });
  run("mul", {a, c}, [&] { return reduce(mul(a, c)); });
  run("scale", {a}, [&] { return reduce(scale(a, -1.7)); });
  run("add_bias", {a, bias}, [&] { return reduce(add_bias(a, bias)); });
  run("gelu", {a}, [&] { return reduce(gelu(scale(a, 3.0))); });
  run("softmax", {a}, [&] { return reduce(softmax(scale(a, 2.0))); });
  run("layer_norm", {a, gamma, beta}, [&] { return reduce(layer_norm(a, gamma, beta, 1e-6)); });
  run("layer_norm (no affine)", {a}, [&] { return reduce(layer_norm(a, Tensor{}, Tensor{}, 1e-6)); });
  run("mse", {a}, [&] { return mse(a, target); });
  run("sum", {a}, [&] { return sum(mul(a, wsum)); });
  run("depthwise_conv2d", {img, kern, kb}, [&] { return reduce(depthwise_conv2d(img, kern, kb)); });
  run("avg_pool2d", {img}, [&] { return reduce(avg_pool2d(img, 3)); });
  run("reshape", {a}, [&] { return reduce(reshape(a, {4, 3})); });
  run("gather_rows", {a}, [&] { return reduce(gather_rows(a, rows)); });
  run("concat_rows", {a, c}, [&] { return reduce(concat_rows(parts)); });
  run("concat_cols", {a, c}, [&] { return reduce(concat_cols(parts)); });
  run("slice_cols", {a}, [&] { return reduce(slice_cols(a, 1, 2)); });
  run("broadcast_rows", {bias}, [&] { return reduce(broadcast_rows(bias, 3)); });
  run("assemble_rows", {a, c}, [&] {
    std::vector<RowPlacement> p{{a, {4, 0, 2}}, {gather_rows(c, std::vector<std::size_t>{1}), {5}}};
    return reduce(assemble_rows(6, p));
  });
  return out;
}

}  // namespace prmim::testing
