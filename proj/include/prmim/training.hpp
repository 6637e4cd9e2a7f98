#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "prmim/geometry.hpp"
#include "prmim/model.hpp"
#include "prmim/tensor.hpp"

namespace prmim {

// MSE between predictions and the target rows at loss_positions.
Tensor masked_loss(const PipelineOutput& output, const Tensor& targets);

struct AdamWConfig {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double warmup_fraction = 0.05;
  // Length of the cosine schedule; 0 keeps lr constant.
  std::size_t total_steps = 0;
};

// Learning rate applied at the given zero-based step.
double scheduled_lr(const AdamWConfig& config, std::size_t step);

struct OptimState {
  AdamWConfig config;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>, std::less<>> first_moment;
  std::map<std::string, std::vector<double>, std::less<>> second_moment;
};

OptimState make_optim_state(const ParameterSet& params, const AdamWConfig& config);

// One decoupled-weight-decay Adam update of every trainable parameter that
// holds a gradient. Parameters without a gradient are left untouched.
void adamw_step(ParameterSet& params, OptimState& state);

// ---- gradient deviation ------------------------------------------------------

struct DeviationRow {
  ReconstructionMode mode = ReconstructionMode::Full;
  double rho_d = 0.0;
  std::size_t n_samples = 0;
  double mean_dev = 0.0;
  double std_dev = 0.0;  // sample standard deviation (n - 1)
  double mean_rel_dev = 0.0;
  std::uint64_t seed = 0;
};

struct DeviationReport {
  std::vector<DeviationRow> rows;
  std::vector<std::string> excluded_parameters;
  double reference_norm = 0.0;
};

struct DeviationSetup {
  double rho_e = 0.75;
  std::vector<double> ratios;
  std::vector<ReconstructionMode> modes;
  std::size_t n_throws = 32;
  Sampling sampling = Sampling::Random;
  std::uint64_t master_seed = 0;
};

// Flattened gradient of the mean batch loss over the parameters shared by
// every mode (aggregation parameters excluded).
std::vector<double> batch_gradient(Model& model, const std::vector<Tensor>& images,
                                   const std::vector<MaskPlan>& plans, ReconstructionMode mode);

// The reference is the full-reconstruction gradient with nothing thrown; each
// sample rethrows every batch item's plan with a seed derived from
// (master_seed, sample, item).
DeviationReport gradient_deviation(Model& model, const std::vector<Tensor>& images,
                                   const std::vector<MaskPlan>& plans, const DeviationSetup& setup);

// ---- toy training ------------------------------------------------------------

struct TrainSetup {
  double rho_e = 0.75;
  double rho_d = 0.5;
  Sampling sampling = Sampling::Random;
  ReconstructionMode mode = ReconstructionMode::Progressive;
  AdamWConfig optim;
  std::size_t batch_size = 8;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
};

using DataSource = std::function<std::vector<Tensor>(std::size_t step)>;

struct TrainResult {
  std::vector<double> losses;
  Model model;
};

// The schedule length is taken from setup.steps when optim.total_steps is 0.
TrainResult train_toy(const ModelConfig& config, const DataSource& data, const TrainSetup& setup);

// Trailing means over `window` consecutive entries; empty if fewer entries.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

}  // namespace prmim
