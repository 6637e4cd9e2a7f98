#pragma once

// Central finite-difference gradient checking for test code. Independent of
// the reverse-mode implementation: it only evaluates forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "prmim/random.hpp"
#include "prmim/tensor.hpp"

namespace prmim::testing {

struct GradCheckResult {
  double worst_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_location;
};

// Relative error with a small floor on the denominator so that exact-zero
// gradients are compared absolutely.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

// `loss` must rebuild the graph from the current leaf values on every call.
inline GradCheckResult gradcheck(std::vector<Tensor> leaves, const std::function<Tensor()>& loss,
                                 double step = 1e-5, std::size_t max_coords_per_leaf = 0) {
  for (auto& leaf : leaves) leaf.zero_grad();
  loss().backward();
  GradCheckResult result;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const std::vector<double> analytic = leaves[l].grad();
    auto values = leaves[l].mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride =
        (max_coords_per_leaf == 0 || n <= max_coords_per_leaf) ? 1 : n / max_coords_per_leaf;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      ++result.checked;
      if (err > result.worst_relative_error) {
        result.worst_relative_error = err;
        result.worst_location = "leaf " + std::to_string(l) + " coord " + std::to_string(i);
      }
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace prmim::testing
