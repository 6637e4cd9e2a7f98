#include "prmim/cost.hpp"

#include <string>

#include "prmim/errors.hpp"
#include "prmim/geometry.hpp"

namespace prmim {

std::string_view to_string(CountConvention c) {
  return c == CountConvention::MacIsFlop ? "1 MAC = 1 FLOP" : "1 MAC = 2 FLOPs";
}

CountConvention parse_convention(std::string_view name) {
  if (name == "mac" || name == to_string(CountConvention::MacIsFlop)) return CountConvention::MacIsFlop;
  if (name == "2flop" || name == to_string(CountConvention::TwoFlopsPerMac)) return CountConvention::TwoFlopsPerMac;
  throw UsageError("unknown counting convention '" + std::string(name) + "'");
}

double flops_per_mac(CountConvention c) { return c == CountConvention::MacIsFlop ? 1.0 : 2.0; }

namespace {

constexpr double kGiga = 1e9;

double stack_macs(double tokens, double dim, double depth, double mlp_ratio) {
  return depth * tokens * ((4.0 + 2.0 * mlp_ratio) * dim * dim + 2.0 * tokens * dim);
}

// Two norms per block plus the final norm, one operation per element.
double norm_macs(double tokens, double dim, double depth) { return (2.0 * depth + 1.0) * tokens * dim; }

double aggregation_macs(const ModelConfig& c, double positions) {
  const double k2 = double(c.kernel_size * c.kernel_size);
  const double d = double(c.dec_dim);
  switch (c.aggregation) {
    case Aggregation::DepthwiseConv:
    case Aggregation::AveragePool:
      return k2 * d * positions;
    case Aggregation::ConvNextBlock:
      return positions * (k2 * d + 2.0 * double(c.mlp_hidden(c.dec_dim)) * d + d);
    case Aggregation::TransformerBlock:
      return stack_macs(positions, d, 1.0, c.mlp_ratio) + norm_macs(positions, d, 1.0);
  }
  return 0.0;
}

double block_memory(double tokens, double dim, double heads, double depth, double mlp_ratio) {
  return depth * (tokens * dim * (9.0 + 2.0 * mlp_ratio) + tokens * tokens * heads);
}

CostBreakdown breakdown(const ModelConfig& c, double rho_e, double rho_d, CountConvention conv) {
  const std::size_t n = c.grid.count();
  CostBreakdown b;
  b.encoder_tokens = n - token_count(n, rho_e);
  b.decoder_tokens = n - token_count(n, rho_d);
  b.head_tokens = token_count(n, rho_e);
  const double te = double(b.encoder_tokens), td = double(b.decoder_tokens), th = double(b.head_tokens);
  const double ed = double(c.enc_dim), dd = double(c.dec_dim), pd = double(c.patch_dim());
  const double f = flops_per_mac(conv) / kGiga;

  b.encoder = f * (te * pd * ed + stack_macs(te, ed, double(c.enc_depth), c.mlp_ratio) +
                   norm_macs(te, ed, double(c.enc_depth)));
  b.decoder = f * (te * ed * dd + stack_macs(td, dd, double(c.dec_depth), c.mlp_ratio) +
                   norm_macs(td, dd, double(c.dec_depth)));
  b.aggregation = f * aggregation_macs(c, double(n));
  b.head = f * th * dd * pd;

  b.memory = te * pd + te * ed + block_memory(te, ed, double(c.enc_heads), double(c.enc_depth), c.mlp_ratio) +
             td * dd + block_memory(td, dd, double(c.dec_heads), double(c.dec_depth), c.mlp_ratio) +
             2.0 * double(n) * dd + th * pd;
  return b;
}

void check_ratios(double rho_e, double rho_d) {
  if (!(rho_e >= 0.0 && rho_e < 1.0)) throw ParameterError("rho_e must lie in [0, 1)");
  if (!(rho_d >= 0.0 && rho_d <= rho_e))
    throw ConstraintError("rho_d (" + std::to_string(rho_d) + ") must lie in [0, rho_e = " + std::to_string(rho_e) + "]");
}

}  // namespace

double flops_transformer_stack(std::size_t tokens, std::size_t dim, std::size_t depth, double mlp_ratio,
                               CountConvention convention) {
  return flops_per_mac(convention) * stack_macs(double(tokens), double(dim), double(depth), mlp_ratio) / kGiga;
}

double flops_aggregation(const ModelConfig& config, std::size_t positions, CountConvention convention) {
  const double p = positions == 0 ? double(config.grid.count()) : double(positions);
  return flops_per_mac(convention) * aggregation_macs(config, p) / kGiga;
}

CostReport cost_report(const ModelConfig& config, double rho_e, double rho_d, CountConvention convention) {
  config.validate();
  check_ratios(rho_e, rho_d);
  CostReport r;
  r.rho_e = rho_e;
  r.rho_d = rho_d;
  r.convention = convention;
  r.cost = breakdown(config, rho_e, rho_d, convention);
  r.baseline = breakdown(config, rho_e, 0.0, convention);
  return r;
}

MemoryEstimate memory_estimate(const ModelConfig& config, double rho_e, double rho_d) {
  const auto r = cost_report(config, rho_e, rho_d);
  return {r.cost.memory, r.memory_ratio()};
}

}  // namespace prmim
