#include <cmath>

#include "doctest.h"
#include "prmim/cost.hpp"
#include "prmim/errors.hpp"

using namespace prmim;

namespace {

// Per-layer MAC tally: qkv, attention scores, weighted sum, projection, MLP.
double block_oracle(double t, double d, double r) {
  const double qkv = t * d * 3 * d;
  const double scores = t * t * d;
  const double mix = t * t * d;
  const double proj = t * d * d;
  const double mlp = 2 * t * d * (r * d);
  return qkv + scores + mix + proj + mlp;
}

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * target; }

}  // namespace

TEST_CASE("flops_transformer_stack") {
  CHECK(flops_transformer_stack(0, 512, 8, 4) == 0.0);
  CHECK(flops_transformer_stack(196, 512, 8, 4) * 1e9 == doctest::Approx(8 * block_oracle(196, 512, 4)));
  CHECK(flops_transformer_stack(98, 512, 8, 4) * 1e9 == doctest::Approx(8 * block_oracle(98, 512, 4)));
  CHECK(flops_transformer_stack(10, 8, 1, 2, CountConvention::TwoFlopsPerMac) ==
        doctest::Approx(2 * flops_transformer_stack(10, 8, 1, 2)));
  CHECK(within(flops_transformer_stack(196, 512, 8, 4), 5.3, 0.02));
}

TEST_CASE("flops_aggregation") {
  auto c = ModelConfig::vit_base_mae();
  const double full = flops_aggregation(c);
  CHECK(full == doctest::Approx(49.0 * 512 * 196 / 1e9));
  CHECK(full / 7.3e-3 >= 0.5);
  CHECK(full / 7.3e-3 <= 2.0);
  c.kernel_size = 1;
  CHECK(flops_aggregation(c) * 1e9 == doctest::Approx(512.0 * 196));
  c.kernel_size = 3;
  const double k3 = flops_aggregation(c);
  c.kernel_size = 7;
  auto c6 = c;
  c6.kernel_size = 6;
  auto c12 = c;
  c12.kernel_size = 12;
  CHECK(flops_aggregation(c12) == doctest::Approx(4 * flops_aggregation(c6)));
  CHECK(k3 < full);
  CHECK(flops_aggregation(c, 147) == doctest::Approx(full * 147.0 / 196.0));
}

TEST_CASE("cost_report") {
  const auto vit = ModelConfig::vit_base_mae();
  SUBCASE("baseline ratios are exactly one") {
    auto r = cost_report(vit, 0.75, 0.0);
    CHECK(r.total_ratio() == 1.0);
    CHECK(r.decoder_ratio() == 1.0);
    CHECK(r.encoder_ratio() == 1.0);
    CHECK(r.memory_ratio() == 1.0);
    CHECK(r.aggregation_ratio() == 1.0);
  }
  SUBCASE("token counts") {
    auto r = cost_report(vit, 0.75, 0.5);
    CHECK(r.cost.encoder_tokens == 49);
    CHECK(r.cost.decoder_tokens == 98);
    CHECK(r.cost.head_tokens == 147);
    CHECK(r.baseline.decoder_tokens == 196);
  }
  SUBCASE("decoder figures") {
    auto full = cost_report(vit, 0.75, 0.0).cost;
    auto half = cost_report(vit, 0.75, 0.5).cost;
    CHECK(within(full.decoder + full.head, 5.3, 0.02));
    CHECK(within(half.decoder + half.head, 2.6, 0.02));
    const double ratio = full.decoder / half.decoder;
    CHECK(ratio >= 1.95);
    CHECK(ratio <= 2.10);
    CHECK(full.aggregation < 0.002 * full.decoder);
  }
  SUBCASE("total ratios") {
    CHECK(within(cost_report(vit, 0.75, 0.5).total_ratio(), 0.72, 0.02 / 0.72));
    CHECK(std::abs(cost_report(vit, 0.75, 0.65).total_ratio() - 0.64) <= 0.03);
  }
  SUBCASE("monotone in rho_d, aggregation constant") {
    double prev_flops = 2.0, prev_mem = 2.0;
    const double agg = cost_report(vit, 0.75, 0.0).cost.aggregation;
    for (int step = 0; step <= 15; ++step) {
      const double rho_d = step == 15 ? 0.75 : 0.05 * step;
      auto r = cost_report(vit, 0.75, rho_d);
      CHECK(r.total_ratio() > 0.0);
      CHECK(r.total_ratio() <= 1.0);
      CHECK(r.total_ratio() <= prev_flops);
      CHECK(r.cost.aggregation == agg);
      if (rho_d > 0.0) CHECK(r.memory_ratio() < prev_mem);
      prev_flops = r.total_ratio();
      prev_mem = r.memory_ratio();
    }
  }
  SUBCASE("convention scales every stage") {
    auto one = cost_report(vit, 0.75, 0.5);
    auto two = cost_report(vit, 0.75, 0.5, CountConvention::TwoFlopsPerMac);
    CHECK(two.cost.total() == doctest::Approx(2 * one.cost.total()));
    CHECK(two.total_ratio() == doctest::Approx(one.total_ratio()));
    CHECK(parse_convention(to_string(CountConvention::TwoFlopsPerMac)) == CountConvention::TwoFlopsPerMac);
  }
  CHECK_THROWS_AS(cost_report(vit, 0.5, 0.6), ConstraintError);
}

TEST_CASE("memory_estimate") {
  const auto vit = ModelConfig::vit_base_mae();
  CHECK(memory_estimate(vit, 0.75, 0.0).ratio == 1.0);
  const auto half = memory_estimate(vit, 0.75, 0.5);
  CHECK(half.ratio >= 0.56);
  CHECK(half.ratio <= 0.72);
  CHECK(half.units > 0.0);
  // Hand tally of the dominant block terms.
  const double enc = 12 * (49.0 * 768 * 17 + 49.0 * 49 * 12);
  const double dec0 = 8 * (196.0 * 512 * 17 + 196.0 * 196 * 16);
  const double dec1 = 8 * (98.0 * 512 * 17 + 98.0 * 98 * 16);
  CHECK(std::abs(half.ratio - (enc + dec1) / (enc + dec0)) < 0.01);
}
