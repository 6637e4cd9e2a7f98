#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "prmim/geometry.hpp"
#include "prmim/model.hpp"
#include "prmim/synth.hpp"
#include "prmim/training.hpp"

namespace prmim {

struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  double rho_e = 0.75;
  double rho_d = 0.5;
  Sampling sampling = Sampling::Furthest;
  std::uint64_t seed = 0;
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double warmup_fraction = 0.05;
  std::size_t batch_size = 16;
  std::size_t steps = 200;
  SynthKind data = SynthKind::GaussianBlobs;

  void validate() const;
  AdamWConfig optimizer() const;
  TrainSetup train_setup() const;
  SynthImageSpec image_spec(std::uint64_t seed) const;
};

// Every key, in a fixed order.
nlohmann::ordered_json to_json(const RunConfig& config);

// Strict: unknown keys and wrong value types are rejected by name; missing
// keys keep their defaults. The result is validated.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace prmim
