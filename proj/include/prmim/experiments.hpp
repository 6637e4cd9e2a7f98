#pragma once

#include <cstdint>
#include <vector>

#include "prmim/config.hpp"
#include "prmim/geometry.hpp"
#include "prmim/training.hpp"

namespace prmim {

struct SampleStats {
  double objective = 0.0;
  double min_dist = 0.0;
  double isolation_rate = 0.0;
};

// Masks with derive_seed(seed, 0), throws with derive_seed(seed, 1).
SampleStats sample_stats(GridShape grid, double rho_e, double rho_d, Sampling strategy, std::uint64_t seed,
                         std::size_t window);

struct OracleInstance {
  std::uint64_t seed = 0;
  GridShape grid{0, 0};
  std::size_t masked = 0;
  std::size_t retained = 0;
  bool feasible = false;
  double furthest_objective = 0.0;
  double random_median_objective = 0.0;
  double best_objective = 0.0;          // exhaustive maximum of the dispersion objective
  double furthest_min_dist = 0.0;
  double best_min_dist = 0.0;           // exhaustive maximum of the min pairwise distance
  double min_dist_ratio() const { return furthest_min_dist / best_min_dist; }
};

// A small instance (3..6 x 3..6 grid, 4..12 masked tokens) drawn from `seed`,
// solved greedily, by `random_draws` random selections and exhaustively.
OracleInstance oracle_instance(std::uint64_t seed, std::size_t random_draws);

// Training on synthetic images drawn per step from the config's generator.
TrainResult train_from_config(const RunConfig& config);
DataSource synthetic_source(const RunConfig& config);

struct DeviationRun {
  std::size_t batch = 8;
  std::size_t warmup_steps = 200;  // training steps before the measurement
  std::size_t samples = 32;
  std::vector<double> ratios{0.25, 0.5, 0.65};
  std::vector<ReconstructionMode> modes{ReconstructionMode::Partial, ReconstructionMode::Progressive};
};

// Parameters come from `warmup_steps` of training under the config (or from
// initialization when 0); the measured batch and its masks derive from
// config.seed, the throws from the same seed.
DeviationReport deviation_experiment(const RunConfig& config, const DeviationRun& run);
// Same measurement on a given model.
DeviationReport deviation_experiment(const RunConfig& config, const DeviationRun& run, Model& model);

}  // namespace prmim
