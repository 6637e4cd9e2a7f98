#include "prmim/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prmim/config.hpp"
#include "prmim/cost.hpp"
#include "prmim/errors.hpp"
#include "prmim/experiments.hpp"
#include "prmim/io.hpp"
#include "prmim/random.hpp"

namespace prmim {

namespace {

using nlohmann::ordered_json;

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  Csv(const std::string& command, const RunConfig& config) {
    text_ << "# prmim " << command << "\n";
    text_ << "# config: " << to_json(config).dump() << "\n";
    text_ << "# seed: " << config.seed << "\n";
  }
  void note(const std::string& key, const std::string& value) { text_ << "# " << key << ": " << value << "\n"; }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
    text_ << "\n";
  }
  std::string str() const { return text_.str(); }

 private:
  std::ostringstream text_;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw UsageError("cannot write '" + path + "'");
  file << text;
}

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : parse_config(path); }

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& item : items) s += (s.empty() ? "" : ",") + item;
  return s;
}

ordered_json stages(const CostBreakdown& b) {
  return {{"encoder", b.encoder}, {"decoder", b.decoder}, {"aggregation", b.aggregation},
          {"head", b.head},       {"total", b.total()}};
}

// ---- subcommands ---------------------------------------------------------

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;

  RunConfig resolve() const {
    RunConfig c = load_config(config);
    if (seed) c.seed = *seed;
    return c;
  }
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true) {
  if (with_config) cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output file (standard output if omitted)");
  cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
}

struct CostOptions {
  CommonOptions common;
  std::optional<double> rho_e, rho_d;
  std::string convention = "mac";
};

void run_cost(const CostOptions& o, std::ostream& out) {
  RunConfig c = o.common.resolve();
  if (o.rho_e) c.rho_e = *o.rho_e;
  if (o.rho_d) c.rho_d = *o.rho_d;
  c.validate();
  const auto report = cost_report(c.model, c.rho_e, c.rho_d, parse_convention(o.convention));
  const auto& cost = report.cost;
  ordered_json j;
  j["command"] = "cost";
  j["config"] = to_json(c);
  j["seed"] = c.seed;
  j["convention"] = std::string(to_string(report.convention));
  j["rho_e"] = report.rho_e;
  j["rho_d"] = report.rho_d;
  j["tokens"] = {{"grid", c.model.grid.count()},
                 {"encoder", cost.encoder_tokens},
                 {"decoder", cost.decoder_tokens},
                 {"head", cost.head_tokens}};
  j["gflops"] = stages(cost);
  j["baseline_gflops"] = stages(report.baseline);
  j["ratios"] = {{"encoder", report.encoder_ratio()},         {"decoder", report.decoder_ratio()},
                 {"aggregation", report.aggregation_ratio()}, {"head", report.head_ratio()},
                 {"total", report.total_ratio()}};
  j["memory"] = {{"units", cost.memory}, {"baseline_units", report.baseline.memory}, {"ratio", report.memory_ratio()}};
  emit(j.dump(2) + "\n", o.common.out, out);
}

struct SampleOptions {
  CommonOptions common;
  std::size_t grid = 14;
  double rho_e = 0.75, rho_d = 0.65;
  std::string strategy = "furthest";
  std::size_t seeds = 200;
  std::size_t window = 3;
};

void run_sample_stats(const SampleOptions& o, std::ostream& out) {
  RunConfig c;
  c.model.grid = {o.grid, o.grid};
  c.rho_e = o.rho_e;
  c.rho_d = o.rho_d;
  c.sampling = parse_sampling(o.strategy);
  if (o.common.seed) c.seed = *o.common.seed;
  if (o.rho_d > o.rho_e) throw ConstraintError("rho_d (" + real(o.rho_d) + ") exceeds rho_e (" + real(o.rho_e) + ")");
  Csv csv("sample-stats", c);
  csv.note("seeds", std::to_string(o.seeds));
  csv.note("window", std::to_string(o.window));
  csv.row({"strategy", "seed", "objective", "min_dist", "isolation_rate"});
  for (std::size_t s = 0; s < o.seeds; ++s) {
    const std::uint64_t seed = c.seed + s;
    const auto st = sample_stats(c.model.grid, c.rho_e, c.rho_d, c.sampling, seed, o.window);
    csv.row({o.strategy, std::to_string(seed), real(st.objective), real(st.min_dist), real(st.isolation_rate)});
  }
  emit(csv.str(), o.common.out, out);
}

struct GradDevOptions {
  CommonOptions common;
  std::vector<double> ratios{0.25, 0.5, 0.65};
  std::vector<std::string> modes{"partial", "progressive"};
  std::size_t samples = 32;
  std::size_t batch = 8;
  std::size_t warmup_steps = 200;
  std::string checkpoint;
};

void run_grad_dev(const GradDevOptions& o, std::ostream& out) {
  RunConfig c = o.common.resolve();
  DeviationRun run;
  run.ratios = o.ratios;
  run.modes.clear();
  for (const auto& m : o.modes) run.modes.push_back(parse_mode(m));
  run.samples = o.samples;
  run.batch = o.batch;
  run.warmup_steps = o.checkpoint.empty() ? o.warmup_steps : 0;
  for (double r : run.ratios)
    if (r < 0.0 || r > c.rho_e) throw ConstraintError("ratio " + real(r) + " outside [0, rho_e = " + real(c.rho_e) + "]");

  DeviationReport report;
  if (o.checkpoint.empty()) {
    report = deviation_experiment(c, run);
  } else {
    Model model = init_model(c.model, derive_seed(c.seed, 0));
    load_parameters(model, o.checkpoint);
    report = deviation_experiment(c, run, model);
  }
  Csv csv("grad-dev", c);
  csv.note("batch", std::to_string(run.batch));
  csv.note("warmup_steps", std::to_string(run.warmup_steps));
  if (!o.checkpoint.empty()) csv.note("checkpoint", o.checkpoint);
  csv.note("reference_norm", real(report.reference_norm));
  csv.note("excluded_parameters", join(report.excluded_parameters));
  csv.row({"mode", "rho_d", "n_samples", "mean_dev", "std_dev", "mean_rel_dev", "seed"});
  for (const auto& r : report.rows)
    csv.row({std::string(to_string(r.mode)), real(r.rho_d), std::to_string(r.n_samples), real(r.mean_dev),
             real(r.std_dev), real(r.mean_rel_dev), std::to_string(r.seed)});
  emit(csv.str(), o.common.out, out);
}

struct TrainOptions {
  CommonOptions common;
  std::optional<std::size_t> steps;
  std::string checkpoint;
};

void run_train(const TrainOptions& o, std::ostream& out) {
  RunConfig c = o.common.resolve();
  if (o.steps) c.steps = *o.steps;
  c.validate();
  const auto result = train_from_config(c);
  Csv csv("train-toy", c);
  csv.row({"step", "loss"});
  for (std::size_t i = 0; i < result.losses.size(); ++i) csv.row({std::to_string(i), real(result.losses[i])});
  emit(csv.str(), o.common.out, out);
  if (!o.checkpoint.empty()) save_checkpoint(result.model.params, o.checkpoint);
}

struct ReconstructOptions {
  CommonOptions common;
  std::string checkpoint;
  std::string image;
  std::string masked;
};

void run_reconstruct(const ReconstructOptions& o) {
  if (o.common.out.empty()) throw UsageError("reconstruct requires --out");
  RunConfig c = o.common.resolve();
  c.validate();
  Model model = init_model(c.model, derive_seed(c.seed, 0));
  if (!o.checkpoint.empty()) load_parameters(model, o.checkpoint);
  const auto& mc = c.model;
  Tensor image = o.image.empty() ? synth_image(c.image_spec(derive_seed(c.seed, 3000)), 0) : read_ppm(o.image);
  const Shape expected{mc.in_channels, mc.image_height(), mc.image_width()};
  if (image.shape() != expected)
    throw DimensionError("image shape " + shape_str(image.shape()) + " does not match the config " + shape_str(expected));

  const auto plan = throw_tokens(generate_mask(mc.grid, c.rho_e, derive_seed(c.seed, 3001)), c.rho_d, c.sampling,
                                 derive_seed(c.seed, 3002));
  const auto result = forward(model, image, plan, mc.mode);
  const Tensor patches = patchify(image, mc.patch_size);
  const std::size_t P = mc.patch_dim();
  std::vector<double> recon(patches.data().begin(), patches.data().end());
  std::vector<double> masked = recon;
  for (std::size_t t : plan.masked_tokens()) {
    std::fill_n(recon.begin() + long(t * P), P, 0.0);
    std::fill_n(masked.begin() + long(t * P), P, 0.0);
  }
  for (std::size_t r = 0; r < result.loss_positions.size(); ++r) {
    const std::size_t t = result.loss_positions[r];
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < P; ++j) mean += patches[t * P + j];
    mean /= double(P);
    for (std::size_t j = 0; j < P; ++j) var += (patches[t * P + j] - mean) * (patches[t * P + j] - mean);
    const double std_dev = std::sqrt(var / double(P) + 1e-6);
    for (std::size_t j = 0; j < P; ++j) {
      const double p = result.predictions[r * P + j];
      recon[t * P + j] = mc.norm_pix ? p * std_dev + mean : p;
    }
  }
  const Shape ps{mc.grid.count(), P};
  write_ppm(unpatchify(Tensor::from_data(ps, recon), mc.grid, mc.patch_size, mc.in_channels), o.common.out);
  if (!o.masked.empty())
    write_ppm(unpatchify(Tensor::from_data(ps, masked), mc.grid, mc.patch_size, mc.in_channels), o.masked);
}

struct OracleOptions {
  CommonOptions common;
  std::size_t instances = 100;
  std::size_t draws = 200;
};

void run_oracle(const OracleOptions& o, std::ostream& out) {
  RunConfig c;
  if (o.common.seed) c.seed = *o.common.seed;
  Csv csv("oracle-sample", c);
  csv.note("instances", std::to_string(o.instances));
  csv.note("random_draws", std::to_string(o.draws));
  csv.row({"seed", "rows", "cols", "masked", "retained", "feasible", "furthest_objective", "random_median_objective",
           "best_objective", "furthest_min_dist", "best_min_dist"});
  for (std::size_t i = 0; i < o.instances; ++i) {
    const auto inst = oracle_instance(c.seed + i, o.draws);
    csv.row({std::to_string(inst.seed), std::to_string(inst.grid.rows), std::to_string(inst.grid.cols),
             std::to_string(inst.masked), std::to_string(inst.retained), inst.feasible ? "1" : "0",
             real(inst.furthest_objective), real(inst.random_median_objective), real(inst.best_objective),
             real(inst.furthest_min_dist), real(inst.best_min_dist)});
  }
  emit(csv.str(), o.common.out, out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partial-reconstruction masked image modeling toolkit", "prmim"};
  app.require_subcommand(1);

  CostOptions cost;
  auto* cost_cmd = app.add_subcommand("cost", "analytic FLOPs and activation-memory report (JSON)");
  add_common(cost_cmd, cost.common);
  cost_cmd->add_option("--rho-e", cost.rho_e, "mask ratio (overrides the config)");
  cost_cmd->add_option("--rho-d", cost.rho_d, "throw ratio (overrides the config)");
  cost_cmd->add_option("--convention", cost.convention, "mac (1 MAC = 1 FLOP) or 2flop")
      ->check(CLI::IsMember({"mac", "2flop"}));

  SampleOptions sample;
  auto* sample_cmd = app.add_subcommand("sample-stats", "dispersion and isolation statistics per seed (CSV)");
  add_common(sample_cmd, sample.common, false);
  sample_cmd->add_option("--grid", sample.grid, "square grid side")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--rho-e", sample.rho_e, "mask ratio");
  sample_cmd->add_option("--rho-d", sample.rho_d, "throw ratio");
  sample_cmd->add_option("--strategy", sample.strategy, "random or furthest")
      ->check(CLI::IsMember({"random", "furthest"}));
  sample_cmd->add_option("--seeds", sample.seeds, "number of seeds");
  sample_cmd->add_option("--window", sample.window, "isolation window (odd, >= 3)");

  GradDevOptions dev;
  auto* dev_cmd = app.add_subcommand("grad-dev", "gradient deviation against full reconstruction (CSV)");
  add_common(dev_cmd, dev.common);
  dev_cmd->add_option("--ratios", dev.ratios, "comma-separated throw ratios")->delimiter(',');
  dev_cmd->add_option("--modes", dev.modes, "comma-separated modes")
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "partial", "progressive"}));
  dev_cmd->add_option("--samples", dev.samples, "throw resamples per (mode, ratio)");
  dev_cmd->add_option("--batch", dev.batch, "images in the measured batch")->check(CLI::PositiveNumber);
  dev_cmd->add_option("--warmup-steps", dev.warmup_steps, "training steps before measuring");
  dev_cmd->add_option("--checkpoint", dev.checkpoint, "measure at stored parameters instead of training")
      ->check(CLI::ExistingFile);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-toy", "masked pre-training on synthetic images (CSV loss curve)");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--steps", train.steps, "training steps (overrides the config)");
  train_cmd->add_option("--checkpoint", train.checkpoint, "write final parameters here");

  ReconstructOptions recon;
  auto* recon_cmd = app.add_subcommand("reconstruct", "reconstruct one image (PPM)");
  add_common(recon_cmd, recon.common);
  recon_cmd->add_option("--checkpoint", recon.checkpoint, "parameters to use")->check(CLI::ExistingFile);
  recon_cmd->add_option("--image", recon.image, "input PPM (a synthetic image if omitted)")->check(CLI::ExistingFile);
  recon_cmd->add_option("--masked", recon.masked, "also write the masked input here");

  OracleOptions oracle;
  auto* oracle_cmd = app.add_subcommand("oracle-sample", "furthest sampling against exhaustive optima (CSV)");
  add_common(oracle_cmd, oracle.common, false);
  oracle_cmd->add_option("--instances", oracle.instances, "number of instances");
  oracle_cmd->add_option("--draws", oracle.draws, "random selections per instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return 1;
  }

  try {
    if (cost_cmd->parsed()) run_cost(cost, out);
    if (sample_cmd->parsed()) run_sample_stats(sample, out);
    if (dev_cmd->parsed()) run_grad_dev(dev, out);
    if (train_cmd->parsed()) run_train(train, out);
    if (recon_cmd->parsed()) run_reconstruct(recon);
    if (oracle_cmd->parsed()) run_oracle(oracle, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace prmim
