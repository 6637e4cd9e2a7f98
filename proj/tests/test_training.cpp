#include <cmath>
#include <numbers>

#include "doctest.h"
#include "prmim/errors.hpp"
#include "prmim/random.hpp"
#include "prmim/synth.hpp"
#include "prmim/training.hpp"
#include "support/gradcheck.hpp"

using namespace prmim;
using prmim::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::toy();
  c.grid = {4, 4};
  c.patch_size = 2;
  c.enc_dim = 8;
  c.enc_depth = 1;
  c.dec_dim = 8;
  return c;
}

std::vector<Tensor> tiny_batch(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  return synth_batch({SynthKind::GaussianBlobs, c.image_height(), c.in_channels, seed}, n);
}

// Scalar AdamW written independently of the library.
struct ScalarAdamW {
  double lr, b1, b2, eps, wd;
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, double lr_t) {
    ++t;
    w = w - lr_t * wd * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return w - lr_t * mhat / (std::sqrt(vhat) + eps);
  }
};

ParameterSet scalar_param(double w) {
  ParameterSet p;
  p.add("w", Tensor::from_data({1}, {w}, true));
  return p;
}

void set_grad(ParameterSet& p, double g) {
  p.zero_grad();
  sum(scale(p.at("w"), g)).backward();
}

}  // namespace

TEST_CASE("masked_loss") {
  PipelineOutput out;
  auto targets = random_tensor({6, 4}, 1, false);
  out.loss_positions = {1, 4};
  out.predictions = gather_rows(targets, out.loss_positions);
  CHECK(masked_loss(out, targets).item() == 0.0);

  std::vector<double> shifted(out.predictions.data().begin(), out.predictions.data().end());
  for (double& v : shifted) v += 2.0;
  out.predictions = Tensor::from_data({2, 4}, shifted);
  CHECK(masked_loss(out, targets).item() == doctest::Approx(4.0).epsilon(1e-14));

  out.loss_positions.clear();
  out.predictions = Tensor::zeros({0, 4});
  CHECK_THROWS_AS(masked_loss(out, targets), UsageError);
}

TEST_CASE("progressive loss decomposes into retained and thrown parts") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelConfig c = tiny_config();
    auto model = init_model(c, seed);
    auto img = tiny_batch(c, 1, seed)[0];
    auto targets = pixel_targets(c, img);
    auto plan = throw_random(generate_mask(c.grid, 0.75, seed), 0.4, seed + 1);
    auto prog = forward(model, img, plan, ReconstructionMode::Progressive);
    auto part = forward(model, img, plan, ReconstructionMode::Partial);
    const std::size_t P = c.patch_dim();
    auto row_sum = [&](const PipelineOutput& o, std::size_t from, std::size_t to) {
      double s = 0;
      for (std::size_t r = from; r < to; ++r)
        for (std::size_t j = 0; j < P; ++j) {
          const double e = o.predictions[r * P + j] - targets[o.loss_positions[r] * P + j];
          s += e * e;
        }
      return s;
    };
    const double retained = row_sum(part, 0, part.loss_positions.size());
    const double thrown = row_sum(prog, prog.retained_rows, prog.loss_positions.size());
    const double total = masked_loss(prog, targets).item() * double(prog.loss_positions.size() * P);
    CHECK(std::abs(total - (retained + thrown)) <= 1e-12 * std::max(1.0, total));
    CHECK(masked_loss(part, targets).item() * double(part.loss_positions.size() * P) ==
          doctest::Approx(retained).epsilon(1e-12));
  }
}

TEST_CASE("adamw_step") {
  SUBCASE("zero gradient without decay leaves parameters unchanged") {
    auto p = scalar_param(0.7);
    auto state = make_optim_state(p, {.lr = 0.1, .weight_decay = 0.0});
    set_grad(p, 0.0);
    adamw_step(p, state);
    CHECK(p.at("w")[0] == 0.7);
  }
  SUBCASE("first step on w^2 from 1") {
    auto p = scalar_param(1.0);
    auto state = make_optim_state(p, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.95, .eps = 1e-8, .weight_decay = 0.0});
    set_grad(p, 2.0);  // d(w^2)/dw at w = 1
    adamw_step(p, state);
    CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
    CHECK(p.at("w")[0] == doctest::Approx(0.9).epsilon(1e-7));
  }
  SUBCASE("decay only") {
    auto p = scalar_param(3.0);
    auto state = make_optim_state(p, {.lr = 0.01, .weight_decay = 0.05});
    set_grad(p, 0.0);
    adamw_step(p, state);
    CHECK(p.at("w")[0] == doctest::Approx(3.0 * (1.0 - 0.01 * 0.05)).epsilon(1e-15));
  }
  SUBCASE("matches a scalar oracle over 100 random steps") {
    AdamWConfig cfg{.lr = 0.03, .beta1 = 0.9, .beta2 = 0.95, .eps = 1e-8, .weight_decay = 0.05,
                    .warmup_fraction = 0.1, .total_steps = 100};
    auto p = scalar_param(0.5);
    auto state = make_optim_state(p, cfg);
    ScalarAdamW oracle{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
    double w = 0.5;
    Rng rng(4);
    for (std::size_t t = 0; t < 100; ++t) {
      const double g = rng.uniform(-3, 3);
      const double lr_t = t < 10 ? cfg.lr * double(t + 1) / 10.0
                                 : cfg.lr * 0.5 * (1 + std::cos(std::numbers::pi * double(t - 10) / 90.0));
      w = oracle.step(w, g, lr_t);
      set_grad(p, g);
      adamw_step(p, state);
      CHECK(std::abs(p.at("w")[0] - w) <= 1e-12);
    }
    CHECK(state.step == 100);
  }
  SUBCASE("missing gradients") {
    auto p = scalar_param(1.0);
    auto state = make_optim_state(p, {});
    CHECK_THROWS_AS(adamw_step(p, state), UsageError);
  }
}

TEST_CASE("scheduled_lr") {
  AdamWConfig c{.lr = 1.0, .warmup_fraction = 0.2, .total_steps = 10};
  CHECK(scheduled_lr(c, 0) == doctest::Approx(0.5));
  CHECK(scheduled_lr(c, 1) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 2) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 6) == doctest::Approx(0.5));
  CHECK(scheduled_lr(c, 10) == 0.0);
  c.total_steps = 0;
  CHECK(scheduled_lr(c, 1234) == 1.0);
}

TEST_CASE("gradient_deviation") {
  const ModelConfig c = tiny_config();
  auto model = init_model(c, 3);
  auto images = tiny_batch(c, 2, 4);
  std::vector<MaskPlan> plans{generate_mask(c.grid, 0.75, 1), generate_mask(c.grid, 0.75, 2)};
  DeviationSetup setup;
  setup.ratios = {0.0, 0.25, 0.5};
  setup.modes = {ReconstructionMode::Full, ReconstructionMode::Partial, ReconstructionMode::Progressive};
  setup.n_throws = 3;
  setup.master_seed = 9;
  auto report = gradient_deviation(model, images, plans, setup);
  REQUIRE(report.rows.size() == 9);
  for (const auto& row : report.rows) {
    CAPTURE(to_string(row.mode));
    CAPTURE(row.rho_d);
    CHECK(row.n_samples == 3);
    CHECK(row.mean_dev >= 0.0);
    CHECK(row.std_dev >= 0.0);
    if (row.mode == ReconstructionMode::Full || row.rho_d == 0.0) {
      CHECK(row.mean_dev == 0.0);
      CHECK(row.mean_rel_dev == 0.0);
    } else {
      CHECK(row.mean_dev > 0.0);
    }
  }
  CHECK(report.reference_norm > 0.0);
  for (const auto& name : report.excluded_parameters) CHECK(name.rfind("agg.", 0) == 0);
  CHECK(report.excluded_parameters.size() == 2);

  auto again = gradient_deviation(model, images, plans, setup);
  for (std::size_t i = 0; i < report.rows.size(); ++i) CHECK(again.rows[i].mean_dev == report.rows[i].mean_dev);

  setup.n_throws = 0;
  CHECK_THROWS_AS(gradient_deviation(model, images, plans, setup), ParameterError);
}

TEST_CASE("train_toy") {
  const ModelConfig c = tiny_config();
  TrainSetup setup;
  setup.batch_size = 2;
  setup.steps = 6;
  setup.seed = 5;
  setup.optim.lr = 1e-3;
  auto data = [&](std::size_t step) { return tiny_batch(c, 2, derive_seed(77, step)); };
  auto a = train_toy(c, data, setup);
  auto b = train_toy(c, data, setup);
  REQUIRE(a.losses.size() == 6);
  CHECK(a.losses == b.losses);
  for (const auto& [name, t] : a.model.params.entries()) {
    const auto& u = b.model.params.at(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }

  SUBCASE("constant images give zero targets") {
    auto constant = [&](std::size_t) { return std::vector<Tensor>(2, Tensor::full({3, 8, 8}, 0.3)); };
    TrainSetup longer = setup;
    longer.steps = 60;
    longer.optim.lr = 1e-2;
    auto r = train_toy(c, constant, longer);
    CHECK(r.losses.back() <= 0.1 * r.losses.front());
    CHECK(r.losses.back() < 1e-4);
  }
  setup.steps = 0;
  CHECK_THROWS_AS(train_toy(c, data, setup), ParameterError);
}

TEST_CASE("moving_average") {
  CHECK(moving_average({1, 2, 3, 4}, 2) == std::vector<double>{1.5, 2.5, 3.5});
  CHECK(moving_average({1, 2}, 3).empty());
  CHECK(moving_average({5}, 1) == std::vector<double>{5});
}
