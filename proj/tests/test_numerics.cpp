#include <cmath>
#include <numbers>

#include "doctest.h"
#include "prmim/errors.hpp"
#include "prmim/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/op_checks.hpp"

using namespace prmim;
using prmim::testing::gradcheck;
using prmim::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-5;
constexpr int kSeeds = 10;

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

std::vector<double> naive_depthwise(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const int C = int(x.dim(0)), H = int(x.dim(1)), W = int(x.dim(2)), k = int(kernel.dim(1));
  const int r = k / 2;
  std::vector<double> out(x.numel());
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double s = bias[c];
        for (int u = -r; u <= r; ++u)
          for (int v = -r; v <= r; ++v) {
            const int ii = i + u, jj = j + v;
            const double xv = (ii >= 0 && ii < H && jj >= 0 && jj < W) ? x[(c * H + ii) * W + jj] : 0.0;
            s += kernel[(c * k + (u + r)) * k + (v + r)] * xv;
          }
        out[(c * H + i) * W + j] = s;
      }
  return out;
}

long double gelu_oracle(long double x) {
  return x * 0.5L * (1.0L + std::erf(x / std::sqrt(2.0L)));
}

}  // namespace

TEST_CASE("matmul values") {
  SUBCASE("identity") {
    auto eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto a = random_tensor({3, 3}, 1, false);
    CHECK(max_abs_diff(matmul(eye, a).data(), a.data()) == 0.0);
  }
  SUBCASE("zeros") {
    auto z = Tensor::zeros({2, 3});
    auto b = random_tensor({3, 2}, 2, false);
    auto c = matmul(z, b);
    CHECK(c.shape() == Shape{2, 2});
    for (double v : c.data()) CHECK(v == 0.0);
  }
  SUBCASE("triple-loop oracle") {
    for (int seed = 0; seed < kSeeds; ++seed) {
      auto a = random_tensor({3, 3}, 100 + seed, false);
      auto b = random_tensor({3, 3}, 200 + seed, false);
      CHECK(max_abs_diff(matmul(a, b).data(), naive_matmul(a, b)) <= 1e-12);
    }
  }
  SUBCASE("shape mismatch names both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 3});
    try {
      matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("depthwise_conv2d values") {
  SUBCASE("centered delta kernel is the identity") {
    auto x = random_tensor({2, 4, 5}, 3, false);
    std::vector<double> k(2 * 9, 0.0);
    k[4] = 1.0;
    k[9 + 4] = 1.0;
    auto y = depthwise_conv2d(x, Tensor::from_data({2, 3, 3}, k), Tensor::zeros({2}));
    CHECK(max_abs_diff(y.data(), x.data()) == 0.0);
  }
  SUBCASE("all-ones kernel counts in-bounds taps") {
    auto y = depthwise_conv2d(Tensor::full({1, 3, 3}, 1.0), Tensor::full({1, 3, 3}, 1.0),
                              Tensor::zeros({1}));
    const std::vector<double> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
    CHECK(max_abs_diff(y.data(), expected) == 0.0);
  }
  SUBCASE("nested-loop oracle") {
    for (int seed = 0; seed < kSeeds; ++seed) {
      auto x = random_tensor({3, 5, 4}, 10 + seed, false);
      auto k = random_tensor({3, 5, 5}, 20 + seed, false);
      auto b = random_tensor({3}, 30 + seed, false);
      CHECK(max_abs_diff(depthwise_conv2d(x, k, b).data(), naive_depthwise(x, k, b)) <= 1e-12);
    }
  }
  SUBCASE("even kernel rejected") {
    CHECK_THROWS_AS(depthwise_conv2d(Tensor::zeros({1, 3, 3}), Tensor::zeros({1, 2, 2}), Tensor::zeros({1})),
                    ParameterError);
  }
}

TEST_CASE("layer_norm values") {
  SUBCASE("constant row") {
    auto y = layer_norm(Tensor::full({2, 4}, 3.0), Tensor::full({4}, 1.0), Tensor::zeros({4}));
    for (double v : y.data()) CHECK(v == 0.0);
  }
  SUBCASE("two-point symmetry") {
    auto y = layer_norm(Tensor::from_data({1, 2}, {1, 3}), Tensor{}, Tensor{}, 1e-12);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("explicit mean/var oracle") {
    for (int seed = 0; seed < kSeeds; ++seed) {
      auto x = random_tensor({3, 7}, 40 + seed, false, -3, 3);
      auto g = random_tensor({7}, 50 + seed, false);
      auto b = random_tensor({7}, 60 + seed, false);
      auto y = layer_norm(x, g, b, 1e-6);
      for (int r = 0; r < 3; ++r) {
        long double mean = 0, var = 0;
        for (int j = 0; j < 7; ++j) mean += x[r * 7 + j];
        mean /= 7;
        for (int j = 0; j < 7; ++j) var += (x[r * 7 + j] - mean) * (x[r * 7 + j] - mean);
        var /= 7;
        for (int j = 0; j < 7; ++j) {
          const long double expect = (x[r * 7 + j] - mean) / std::sqrt(var + 1e-6L) * g[j] + b[j];
          CHECK(std::abs(y[r * 7 + j] - double(expect)) <= 1e-12);
        }
      }
    }
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2}), Tensor{}, Tensor{}, 0.0), ParameterError);
}

TEST_CASE("softmax values") {
  auto y = softmax(Tensor::from_data({2}, {0, 0}));
  CHECK(y[0] == 0.5);
  CHECK(y[1] == 0.5);

  for (int seed = 0; seed < kSeeds; ++seed) {
    auto x = random_tensor({2, 6}, 70 + seed, false, -5, 5);
    auto shifted = Tensor::from_data(x.shape(), [&] {
      std::vector<double> v(x.data().begin(), x.data().end());
      for (double& e : v) e += 123.25;
      return v;
    }());
    CHECK(max_abs_diff(softmax(x).data(), softmax(shifted).data()) <= 1e-13);

    auto s = softmax(x);
    for (int r = 0; r < 2; ++r) {
      long double z = 0;
      for (int j = 0; j < 6; ++j) z += std::exp(static_cast<long double>(x[r * 6 + j]));
      for (int j = 0; j < 6; ++j) {
        const long double expect = std::exp(static_cast<long double>(x[r * 6 + j])) / z;
        CHECK(std::abs(s[r * 6 + j] - double(expect)) <= 1e-15);
      }
    }
  }
}

TEST_CASE("gelu values") {
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(std::abs(gelu(Tensor::scalar(1.0)).item() - double(gelu_oracle(1.0L))) <= 1e-15);

  for (int seed = 0; seed < kSeeds; ++seed) {
    auto x = random_tensor({16}, 80 + seed, false, -4, 4);
    std::vector<double> neg(x.data().begin(), x.data().end());
    for (double& v : neg) v = -v;
    auto gp = gelu(x);
    auto gn = gelu(Tensor::from_data({16}, neg));
    for (int i = 0; i < 16; ++i) {
      // gelu(x) + gelu(-x) = x (Phi(x) - Phi(-x)) = x erf(x / sqrt 2)
      const long double xi = x[i];
      const long double expect = xi * std::erf(xi / std::sqrt(2.0L));
      CHECK(std::abs(gp[i] + gn[i] - double(expect)) <= 1e-14);
      CHECK(std::abs(gp[i] - double(gelu_oracle(xi))) <= 1e-15);
    }
  }
}

TEST_CASE("mse values") {
  auto p = random_tensor({3, 4}, 5, false);
  CHECK(mse(p, p).item() == 0.0);
  CHECK(mse(Tensor::full({2, 2}, 3.0), Tensor::full({2, 2}, 1.0)).item() == 4.0);
  for (int seed = 0; seed < kSeeds; ++seed) {
    auto a = random_tensor({5, 3}, 90 + seed, false);
    auto b = random_tensor({5, 3}, 95 + seed, false);
    double s = 0;
    for (int i = 0; i < 15; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::abs(mse(a, b).item() - s / 15) <= 1e-15);
  }
  CHECK_THROWS_AS(mse(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("backward basics") {
  SUBCASE("linear case") {
    auto w = random_tensor({5}, 1);
    auto x = random_tensor({5}, 2, false);
    sum(mul(w, x)).backward();
    CHECK(max_abs_diff(w.grad(), x.data()) == 0.0);
  }
  SUBCASE("detached branch and unused leaves get zero gradient") {
    auto w = random_tensor({4}, 3);
    auto unused = random_tensor({4}, 4);
    auto loss = add(sum(mul(w, w)), sum(mul(w.detach(), unused.detach())));
    loss.backward();
    for (double g : unused.grad()) CHECK(g == 0.0);
    const auto gw = w.grad();
    for (int i = 0; i < 4; ++i) CHECK(gw[i] == doctest::Approx(2 * w[i]));
  }
  SUBCASE("non-scalar loss rejected") {
    auto w = random_tensor({2}, 5);
    CHECK_THROWS_AS(scale(w, 2.0).backward(), UsageError);
  }
  SUBCASE("inputs are not mutated") {
    auto a = random_tensor({3, 3}, 6);
    std::vector<double> before(a.data().begin(), a.data().end());
    auto y = layer_norm(gelu(matmul(a, a)), Tensor{}, Tensor{});
    sum(softmax(y)).backward();
    CHECK(max_abs_diff(a.data(), before) == 0.0);
  }
  SUBCASE("tape is topological") {
    auto a = random_tensor({2, 3}, 7);
    auto b = random_tensor({3, 2}, 8);
    auto c = matmul(a, b);
    auto loss = sum(add(c, gelu(c)));
    auto tape = Tape::record(loss);
    CHECK(tape.size() == 6);
    CHECK(tape.is_topological());
    CHECK(tape.entries().back().output == loss.node());
  }
}

TEST_CASE("finite-difference agreement for every op") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    CAPTURE(seed);
    for (const auto& check : prmim::testing::op_gradchecks(1000 + 17 * seed)) {
      CAPTURE(check.op);
      CHECK(check.result.worst_relative_error <= kGradTol);
    }
  }
}

TEST_CASE("composite MLP matches central differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    const std::uint64_t s = 5000 + seed;
    auto x = random_tensor({4, 6}, s, false);
    auto w1 = random_tensor({6, 8}, s + 1);
    auto b1 = random_tensor({8}, s + 2);
    auto w2 = random_tensor({8, 3}, s + 3);
    auto b2 = random_tensor({3}, s + 4);
    auto y = random_tensor({4, 3}, s + 5, false);
    auto r = gradcheck({w1, b1, w2, b2}, [&] {
      auto h = gelu(linear(layer_norm(x, Tensor{}, Tensor{}), w1, b1));
      return mse(softmax(linear(h, w2, b2)), y);
    });
    CAPTURE(r.worst_location);
    CHECK(r.worst_relative_error <= kGradTol);
  }
}

TEST_CASE("determinism") {
  auto run = [] {
    auto a = random_tensor({5, 5}, 42);
    auto loss = sum(softmax(gelu(matmul(a, transpose(a)))));
    loss.backward();
    return std::make_pair(loss.item(), a.grad());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}
