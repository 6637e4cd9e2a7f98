#include "prmim/experiments.hpp"

#include <algorithm>

#include "prmim/random.hpp"
#include "prmim/synth.hpp"

namespace prmim {

SampleStats sample_stats(GridShape grid, double rho_e, double rho_d, Sampling strategy, std::uint64_t seed,
                         std::size_t window) {
  const auto plan = throw_tokens(generate_mask(grid, rho_e, derive_seed(seed, 0)), rho_d, strategy,
                                 derive_seed(seed, 1));
  const auto d = distance_matrix(plan);
  const auto s = selection_of(plan);
  return {dispersion_objective(d, s), min_pairwise_distance(d, s), isolation_rate(plan, window)};
}

OracleInstance oracle_instance(std::uint64_t seed, std::size_t random_draws) {
  Rng rng(seed);
  OracleInstance out;
  out.seed = seed;
  out.grid = {3 + rng.uniform_index(4), 3 + rng.uniform_index(4)};
  const std::size_t masked = std::min<std::size_t>(out.grid.count(), 4 + rng.uniform_index(9));
  const auto plan = generate_mask(out.grid, double(masked) / double(out.grid.count()), derive_seed(seed, 0));
  const auto d = distance_matrix(plan);
  out.masked = d.size();
  out.retained = 2 + rng.uniform_index(d.size() - 2);

  const auto greedy = furthest_select(d, out.retained, rng.uniform_index(d.size()));
  out.feasible = greedy.retained() == out.retained;
  out.furthest_objective = dispersion_objective(d, greedy);
  out.furthest_min_dist = min_pairwise_distance(d, greedy);

  std::vector<double> random_objectives;
  for (std::size_t k = 0; k < random_draws; ++k)
    random_objectives.push_back(dispersion_objective(d, random_select(d.size(), out.retained, derive_seed(seed, 1, k))));
  std::sort(random_objectives.begin(), random_objectives.end());
  if (!random_objectives.empty()) {
    const std::size_t m = random_objectives.size();
    out.random_median_objective =
        m % 2 ? random_objectives[m / 2] : 0.5 * (random_objectives[m / 2 - 1] + random_objectives[m / 2]);
  }
  out.best_objective = brute_force_select(d, out.retained).objective;
  out.best_min_dist = brute_force_maxmin(d, out.retained).objective;
  return out;
}

DataSource synthetic_source(const RunConfig& config) {
  const RunConfig c = config;
  return [c](std::size_t step) { return synth_batch(c.image_spec(derive_seed(c.seed, 1000, step)), c.batch_size); };
}

TrainResult train_from_config(const RunConfig& config) {
  config.validate();
  return train_toy(config.model, synthetic_source(config), config.train_setup());
}

DeviationReport deviation_experiment(const RunConfig& config, const DeviationRun& run, Model& model) {
  const auto images = synth_batch(config.image_spec(derive_seed(config.seed, 2000)), run.batch);
  std::vector<MaskPlan> plans;
  for (std::size_t i = 0; i < run.batch; ++i)
    plans.push_back(generate_mask(config.model.grid, config.rho_e, derive_seed(config.seed, 2001, i)));
  DeviationSetup setup;
  setup.rho_e = config.rho_e;
  setup.ratios = run.ratios;
  setup.modes = run.modes;
  setup.n_throws = run.samples;
  setup.sampling = config.sampling;
  setup.master_seed = config.seed;
  return gradient_deviation(model, images, plans, setup);
}

DeviationReport deviation_experiment(const RunConfig& config, const DeviationRun& run) {
  config.validate();
  Model model = init_model(config.model, derive_seed(config.seed, 0));
  if (run.warmup_steps > 0) {
    RunConfig warm = config;
    warm.steps = run.warmup_steps;
    model = train_from_config(warm).model;
  }
  return deviation_experiment(config, run, model);
}

}  // namespace prmim
