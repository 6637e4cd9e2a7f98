#include "prmim/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "prmim/errors.hpp"
#include "prmim/random.hpp"

namespace prmim {

Tensor masked_loss(const PipelineOutput& output, const Tensor& targets) {
  if (output.loss_positions.empty()) throw UsageError("masked_loss: no loss positions");
  return mse(output.predictions, gather_rows(targets, output.loss_positions));
}

double scheduled_lr(const AdamWConfig& config, std::size_t step) {
  if (config.total_steps == 0) return config.lr;
  const double total = double(config.total_steps);
  const double warmup = std::floor(config.warmup_fraction * total + 0.5);
  const double t = double(step);
  if (t < warmup) return config.lr * (t + 1.0) / warmup;
  if (t >= total) return 0.0;
  const double progress = (t - warmup) / (total - warmup);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimState make_optim_state(const ParameterSet& params, const AdamWConfig& config) {
  OptimState state;
  state.config = config;
  for (const auto& name : params.trainable_names()) {
    const std::size_t n = params.at(name).numel();
    state.first_moment.emplace(name, std::vector<double>(n, 0.0));
    state.second_moment.emplace(name, std::vector<double>(n, 0.0));
  }
  return state;
}

void adamw_step(ParameterSet& params, OptimState& state) {
  const auto& c = state.config;
  const auto names = params.trainable_names();
  bool any = false;
  for (const auto& name : names) any = any || params.at(name).has_grad();
  if (!any) throw UsageError("adamw_step: no parameter holds a gradient");

  const double lr = scheduled_lr(c, state.step);
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (const auto& name : names) {
    Tensor& p = params.at(name);
    if (!p.has_grad()) continue;
    auto m_it = state.first_moment.find(name);
    auto v_it = state.second_moment.find(name);
    if (m_it == state.first_moment.end() || m_it->second.size() != p.numel())
      throw UsageError("adamw_step: optimizer state does not match parameter '" + name + "'");
    auto& m = m_it->second;
    auto& v = v_it->second;
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= 1.0 - lr * c.weight_decay;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

namespace {

bool is_aggregation_parameter(const std::string& name) { return name.rfind("agg.", 0) == 0; }

Tensor batch_loss(const Model& model, const std::vector<Tensor>& images, const std::vector<MaskPlan>& plans,
                  ReconstructionMode mode) {
  if (images.empty() || images.size() != plans.size())
    throw UsageError("batch needs one mask plan per image");
  Tensor total;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto out = forward(model, images[i], plans[i], mode);
    Tensor loss = masked_loss(out, pixel_targets(model.config, images[i]));
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / double(images.size()));
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

std::vector<double> batch_gradient(Model& model, const std::vector<Tensor>& images,
                                   const std::vector<MaskPlan>& plans, ReconstructionMode mode) {
  model.params.zero_grad();
  batch_loss(model, images, plans, mode).backward();
  std::vector<double> flat;
  for (const auto& name : model.params.trainable_names()) {
    if (is_aggregation_parameter(name)) continue;
    const auto g = model.params.at(name).grad();
    flat.insert(flat.end(), g.begin(), g.end());
  }
  model.params.zero_grad();
  return flat;
}

DeviationReport gradient_deviation(Model& model, const std::vector<Tensor>& images,
                                   const std::vector<MaskPlan>& plans, const DeviationSetup& setup) {
  if (setup.n_throws < 1) throw ParameterError("gradient_deviation: n_throws must be at least 1");
  DeviationReport report;
  for (const auto& name : model.params.trainable_names())
    if (is_aggregation_parameter(name)) report.excluded_parameters.push_back(name);

  std::vector<MaskPlan> base;
  for (const auto& p : plans) base.push_back(p.without_throw());
  const auto g0 = batch_gradient(model, images, base, ReconstructionMode::Full);
  report.reference_norm = std::sqrt(std::inner_product(g0.begin(), g0.end(), g0.begin(), 0.0));

  for (auto mode : setup.modes) {
    for (double rho_d : setup.ratios) {
      std::vector<double> devs;
      double rel_sum = 0.0;
      for (std::size_t s = 0; s < setup.n_throws; ++s) {
        std::vector<MaskPlan> thrown;
        for (std::size_t i = 0; i < base.size(); ++i)
          thrown.push_back(throw_tokens(base[i], rho_d, setup.sampling, derive_seed(setup.master_seed, s, i)));
        const double d = l2_distance(batch_gradient(model, images, thrown, mode), g0);
        devs.push_back(d);
        rel_sum += report.reference_norm > 0.0 ? d / report.reference_norm : 0.0;
      }
      DeviationRow row;
      row.mode = mode;
      row.rho_d = rho_d;
      row.n_samples = devs.size();
      row.seed = setup.master_seed;
      double sum = 0.0;
      for (double d : devs) sum += d;
      row.mean_dev = sum / double(devs.size());
      row.mean_rel_dev = rel_sum / double(devs.size());
      if (devs.size() > 1) {
        double sq = 0.0;
        for (double d : devs) sq += (d - row.mean_dev) * (d - row.mean_dev);
        row.std_dev = std::sqrt(sq / double(devs.size() - 1));
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

TrainResult train_toy(const ModelConfig& config, const DataSource& data, const TrainSetup& setup) {
  if (setup.steps < 1) throw ParameterError("train_toy: steps must be at least 1");
  if (setup.batch_size < 1) throw ParameterError("train_toy: batch_size must be at least 1");
  TrainResult result{{}, init_model(config, derive_seed(setup.seed, 0))};
  AdamWConfig optim = setup.optim;
  if (optim.total_steps == 0) optim.total_steps = setup.steps;
  OptimState state = make_optim_state(result.model.params, optim);

  for (std::size_t step = 0; step < setup.steps; ++step) {
    const auto images = data(step);
    if (images.size() != setup.batch_size)
      throw UsageError("data source returned " + std::to_string(images.size()) + " images, expected " +
                       std::to_string(setup.batch_size));
    std::vector<MaskPlan> plans;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto mask = generate_mask(config.grid, setup.rho_e, derive_seed(setup.seed, step + 1, 2 * i));
      plans.push_back(throw_tokens(mask, setup.rho_d, setup.sampling, derive_seed(setup.seed, step + 1, 2 * i + 1)));
    }
    result.model.params.zero_grad();
    Tensor loss = batch_loss(result.model, images, plans, setup.mode);
    result.losses.push_back(loss.item());
    loss.backward();
    adamw_step(result.model.params, state);
  }
  result.model.params.zero_grad();
  return result;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out;
  if (window == 0 || values.size() < window) return out;
  for (std::size_t end = window; end <= values.size(); ++end) {
    double s = 0.0;
    for (std::size_t i = end - window; i < end; ++i) s += values[i];
    out.push_back(s / double(window));
  }
  return out;
}

}  // namespace prmim
