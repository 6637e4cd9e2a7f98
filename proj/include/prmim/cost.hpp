#pragma once

#include <cstddef>
#include <string_view>

#include "prmim/model.hpp"

namespace prmim {

enum class CountConvention { MacIsFlop, TwoFlopsPerMac };

std::string_view to_string(CountConvention c);
CountConvention parse_convention(std::string_view name);
double flops_per_mac(CountConvention c);

// Attention and MLP blocks, G operations.
double flops_transformer_stack(std::size_t tokens, std::size_t dim, std::size_t depth, double mlp_ratio,
                               CountConvention convention = CountConvention::MacIsFlop);

// Aggregation evaluated at `positions` grid cells (0 means every cell).
double flops_aggregation(const ModelConfig& config, std::size_t positions = 0,
                         CountConvention convention = CountConvention::MacIsFlop);

struct CostBreakdown {
  std::size_t encoder_tokens = 0;
  std::size_t decoder_tokens = 0;
  std::size_t head_tokens = 0;
  double encoder = 0.0;      // patch embedding, blocks, norms
  double decoder = 0.0;      // embedding, blocks, norms
  double aggregation = 0.0;
  double head = 0.0;         // pixel projection of every supervised token
  double memory = 0.0;       // activation proxy, scalar units

  double total() const { return encoder + decoder + aggregation + head; }
};

struct CostReport {
  double rho_e = 0.0;
  double rho_d = 0.0;
  CountConvention convention = CountConvention::MacIsFlop;
  CostBreakdown cost;
  CostBreakdown baseline;  // same config with nothing thrown

  double encoder_ratio() const { return cost.encoder / baseline.encoder; }
  double decoder_ratio() const { return cost.decoder / baseline.decoder; }
  double aggregation_ratio() const { return cost.aggregation / baseline.aggregation; }
  double head_ratio() const { return cost.head / baseline.head; }
  double total_ratio() const { return cost.total() / baseline.total(); }
  double memory_ratio() const { return cost.memory / baseline.memory; }
};

CostReport cost_report(const ModelConfig& config, double rho_e, double rho_d,
                       CountConvention convention = CountConvention::MacIsFlop);

struct MemoryEstimate {
  double units = 0.0;
  double ratio = 1.0;
};

// Per block: tokens*dim*(9 + 2*mlp_ratio) stored activations plus
// tokens^2*heads attention probabilities; embedding, grid and head outputs
// are added as linear terms.
MemoryEstimate memory_estimate(const ModelConfig& config, double rho_e, double rho_d);

}  // namespace prmim
