#include "prmim/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "prmim/errors.hpp"

namespace prmim {

namespace {

using nlohmann::json;

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

[[noreturn]] void bad_type(const std::string& key, const char* expected, const json& v) {
  throw FormatError("config key '" + key + "' expects " + expected + ", got " + v.dump());
}

double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) bad_type(key, "a number", v);
  return v.get<double>();
}

std::size_t as_count(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) bad_type(key, "a non-negative integer", v);
  return v.get<std::size_t>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad_type(key, "true or false", v);
  return v.get<bool>();
}

std::string as_text(const std::string& key, const json& v) {
  if (!v.is_string()) bad_type(key, "a string", v);
  return v.get<std::string>();
}

template <typename Enum, typename Parse>
Enum as_enum(const std::string& key, const json& v, Parse parse) {
  const std::string text = as_text(key, v);
  try {
    return parse(text);
  } catch (const Error& e) {
    throw FormatError("config key '" + key + "': " + e.what());
  }
}

#define PRMIM_REAL(name, member)                                     \
  Field {                                                            \
    name, [](const RunConfig& c) { return json(c.member); },         \
        [](RunConfig& c, const json& v) { c.member = as_real(name, v); } \
  }
#define PRMIM_COUNT(name, member)                                     \
  Field {                                                             \
    name, [](const RunConfig& c) { return json(c.member); },          \
        [](RunConfig& c, const json& v) { c.member = as_count(name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      PRMIM_COUNT("grid_rows", model.grid.rows),
      PRMIM_COUNT("grid_cols", model.grid.cols),
      PRMIM_COUNT("patch_size", model.patch_size),
      PRMIM_COUNT("in_channels", model.in_channels),
      PRMIM_COUNT("enc_dim", model.enc_dim),
      PRMIM_COUNT("enc_depth", model.enc_depth),
      PRMIM_COUNT("enc_heads", model.enc_heads),
      PRMIM_COUNT("dec_dim", model.dec_dim),
      PRMIM_COUNT("dec_depth", model.dec_depth),
      PRMIM_COUNT("dec_heads", model.dec_heads),
      PRMIM_REAL("mlp_ratio", model.mlp_ratio),
      PRMIM_COUNT("kernel_size", model.kernel_size),
      {"aggregation", [](const RunConfig& c) { return json(std::string(to_string(c.model.aggregation))); },
       [](RunConfig& c, const json& v) {
         c.model.aggregation = as_enum<Aggregation>("aggregation", v, parse_aggregation);
       }},
      {"norm_pix", [](const RunConfig& c) { return json(c.model.norm_pix); },
       [](RunConfig& c, const json& v) { c.model.norm_pix = as_bool("norm_pix", v); }},
      {"mode", [](const RunConfig& c) { return json(std::string(to_string(c.model.mode))); },
       [](RunConfig& c, const json& v) { c.model.mode = as_enum<ReconstructionMode>("mode", v, parse_mode); }},
      PRMIM_REAL("rho_e", rho_e),
      PRMIM_REAL("rho_d", rho_d),
      {"sampling", [](const RunConfig& c) { return json(std::string(to_string(c.sampling))); },
       [](RunConfig& c, const json& v) { c.sampling = as_enum<Sampling>("sampling", v, parse_sampling); }},
      {"seed", [](const RunConfig& c) { return json(c.seed); },
       [](RunConfig& c, const json& v) {
         if (!v.is_number_unsigned()) bad_type("seed", "a non-negative integer", v);
         c.seed = v.get<std::uint64_t>();
       }},
      PRMIM_REAL("lr", lr),
      PRMIM_REAL("beta1", beta1),
      PRMIM_REAL("beta2", beta2),
      PRMIM_REAL("eps", eps),
      PRMIM_REAL("weight_decay", weight_decay),
      PRMIM_REAL("warmup_fraction", warmup_fraction),
      PRMIM_COUNT("batch_size", batch_size),
      PRMIM_COUNT("steps", steps),
      {"data", [](const RunConfig& c) { return json(std::string(to_string(c.data))); },
       [](RunConfig& c, const json& v) { c.data = as_enum<SynthKind>("data", v, parse_synth_kind); }},
  };
  return table;
}

#undef PRMIM_REAL
#undef PRMIM_COUNT

void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError(message);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  require(rho_e >= 0.0 && rho_e < 1.0, "rho_e must lie in [0, 1)");
  if (!(rho_d >= 0.0 && rho_d <= rho_e)) {
    std::ostringstream msg;
    msg << "rho_d (" << rho_d << ") must lie in [0, rho_e] with rho_e = " << rho_e;
    throw ConstraintError(msg.str());
  }
  require(lr > 0.0, "lr must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "warmup_fraction must lie in [0, 1]");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(steps >= 1, "steps must be at least 1");
}

AdamWConfig RunConfig::optimizer() const {
  return {lr, beta1, beta2, eps, weight_decay, warmup_fraction, steps};
}

TrainSetup RunConfig::train_setup() const {
  TrainSetup s;
  s.rho_e = rho_e;
  s.rho_d = rho_d;
  s.sampling = sampling;
  s.mode = model.mode;
  s.optim = optimizer();
  s.batch_size = batch_size;
  s.steps = steps;
  s.seed = seed;
  return s;
}

SynthImageSpec RunConfig::image_spec(std::uint64_t image_seed) const {
  if (model.image_height() != model.image_width())
    throw ParameterError("synthetic images are square; grid_rows and grid_cols must match");
  return {data, model.image_height(), model.in_channels, image_seed};
}

nlohmann::ordered_json to_json(const RunConfig& config) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : fields()) j[f.key] = f.get(config);
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw FormatError("unknown config key '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace prmim
