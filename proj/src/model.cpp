#include "prmim/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prmim/errors.hpp"
#include "prmim/random.hpp"

namespace prmim {

std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::DepthwiseConv: return "depthwise_conv";
    case Aggregation::TransformerBlock: return "transformer_block";
    case Aggregation::ConvNextBlock: return "convnext_block";
    case Aggregation::AveragePool: return "average_pool";
  }
  return "?";
}

std::string_view to_string(ReconstructionMode m) {
  switch (m) {
    case ReconstructionMode::Full: return "full";
    case ReconstructionMode::Partial: return "partial";
    case ReconstructionMode::Progressive: return "progressive";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view name) {
  for (auto a : {Aggregation::DepthwiseConv, Aggregation::TransformerBlock, Aggregation::ConvNextBlock,
                 Aggregation::AveragePool})
    if (name == to_string(a)) return a;
  throw ParameterError("unknown aggregation '" + std::string(name) + "'");
}

ReconstructionMode parse_mode(std::string_view name) {
  for (auto m : {ReconstructionMode::Full, ReconstructionMode::Partial, ReconstructionMode::Progressive})
    if (name == to_string(m)) return m;
  throw ParameterError("unknown reconstruction mode '" + std::string(name) + "'");
}

std::size_t ModelConfig::mlp_hidden(std::size_t dim) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
}

void ModelConfig::validate() const {
  grid.validate();
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ParameterError(std::string(name) + " must be positive");
  };
  positive(patch_size, "patch_size");
  positive(in_channels, "in_channels");
  positive(enc_dim, "enc_dim");
  positive(enc_heads, "enc_heads");
  positive(dec_dim, "dec_dim");
  positive(dec_heads, "dec_heads");
  if (enc_dim % enc_heads != 0) {
    throw ParameterError("enc_heads=" + std::to_string(enc_heads) + " does not divide enc_dim=" +
                         std::to_string(enc_dim));
  }
  if (dec_dim % dec_heads != 0) {
    throw ParameterError("dec_heads=" + std::to_string(dec_heads) + " does not divide dec_dim=" +
                         std::to_string(dec_dim));
  }
  if (enc_dim % 4 != 0 || dec_dim % 4 != 0) {
    throw ParameterError("enc_dim and dec_dim must be divisible by 4 for the sine/cosine tables");
  }
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ParameterError("kernel_size must be odd, got " + std::to_string(kernel_size));
  }
  if (!(mlp_ratio > 0.0)) throw ParameterError("mlp_ratio must be positive");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.kernel_size = 3;
  return c;
}

ModelConfig ModelConfig::vit_base_mae() {
  ModelConfig c;
  c.grid = {14, 14};
  c.patch_size = 16;
  c.in_channels = 3;
  c.enc_dim = 768;
  c.enc_depth = 12;
  c.enc_heads = 12;
  c.dec_dim = 512;
  c.dec_depth = 8;
  c.dec_heads = 16;
  c.mlp_ratio = 4.0;
  c.kernel_size = 7;
  return c;
}

// ---- ParameterSet ----------------------------------------------------------

void ParameterSet::add(const std::string& name, Tensor value) {
  if (!entries_.emplace(name, std::move(value)).second) {
    throw UsageError("duplicate parameter name '" + name + "'");
  }
}

bool ParameterSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const Tensor& ParameterSet::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

Tensor& ParameterSet::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> ParameterSet::trainable_names() const {
  std::vector<std::string> names;
  for (const auto& [name, t] : entries_)
    if (t.requires_grad()) names.push_back(name);
  return names;
}

std::size_t ParameterSet::trainable_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_)
    if (t.requires_grad()) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet copy;
  for (const auto& [name, t] : entries_) copy.add(name, t.clone(t.requires_grad()));
  return copy;
}

// ---- initialization --------------------------------------------------------

Tensor sincos_pos_table(GridShape grid, std::size_t dim) {
  if (dim % 4 != 0) throw ParameterError("positional table width must be divisible by 4");
  const std::size_t n = grid.count();
  const std::size_t quarter = dim / 4;
  std::vector<double> table(n * dim);
  for (std::size_t t = 0; t < n; ++t) {
    const GridCoord c = grid.coord(t);
    // First half encodes the column, second half the row.
    const double pos[2] = {static_cast<double>(c.col), static_cast<double>(c.row)};
    for (std::size_t half = 0; half < 2; ++half) {
      for (std::size_t i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
        table[t * dim + half * 2 * quarter + i] = std::sin(pos[half] * omega);
        table[t * dim + half * 2 * quarter + quarter + i] = std::cos(pos[half] * omega);
      }
    }
  }
  return Tensor::from_data({n, dim}, std::move(table), false);
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;

Tensor trunc_normal(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(kInitStd);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

void add_linear(ParameterSet& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  p.add(prefix + ".weight", trunc_normal({in, out}, rng));
  p.add(prefix + ".bias", Tensor::zeros({out}, true));
}

void add_norm(ParameterSet& p, const std::string& prefix, std::size_t dim) {
  p.add(prefix + ".gamma", Tensor::full({dim}, 1.0, true));
  p.add(prefix + ".beta", Tensor::zeros({dim}, true));
}

void add_block(ParameterSet& p, const std::string& prefix, std::size_t dim, std::size_t hidden, Rng& rng) {
  add_norm(p, prefix + ".norm1", dim);
  add_linear(p, prefix + ".attn.qkv", dim, 3 * dim, rng);
  add_linear(p, prefix + ".attn.proj", dim, dim, rng);
  add_norm(p, prefix + ".norm2", dim);
  add_linear(p, prefix + ".mlp.fc1", dim, hidden, rng);
  add_linear(p, prefix + ".mlp.fc2", hidden, dim, rng);
}

Tensor norm(const ParameterSet& p, const std::string& prefix, const Tensor& x) {
  return layer_norm(x, p.at(prefix + ".gamma"), p.at(prefix + ".beta"), kNormEps);
}

Tensor dense(const ParameterSet& p, const std::string& prefix, const Tensor& x) {
  return linear(x, p.at(prefix + ".weight"), p.at(prefix + ".bias"));
}

Tensor attention(const ParameterSet& p, const std::string& prefix, const Tensor& x, std::size_t heads) {
  const std::size_t dim = x.dim(1);
  const std::size_t head_dim = dim / heads;
  const Tensor qkv = dense(p, prefix + ".qkv", x);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = slice_cols(qkv, h * head_dim, head_dim);
    const Tensor k = slice_cols(qkv, dim + h * head_dim, head_dim);
    const Tensor v = slice_cols(qkv, 2 * dim + h * head_dim, head_dim);
    const Tensor weights = softmax(scale(matmul(q, transpose(k)), scale_factor));
    outs.push_back(matmul(weights, v));
  }
  return dense(p, prefix + ".proj", heads == 1 ? outs[0] : concat_cols(outs));
}

// Pre-norm transformer block.
Tensor block(const ParameterSet& p, const std::string& prefix, const Tensor& x, std::size_t heads) {
  const Tensor h = add(x, attention(p, prefix + ".attn", norm(p, prefix + ".norm1", x), heads));
  const Tensor m = dense(p, prefix + ".mlp.fc2", gelu(dense(p, prefix + ".mlp.fc1", norm(p, prefix + ".norm2", h))));
  return add(h, m);
}

std::vector<std::size_t> ascending_union(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

// Position of each token within an ascending sequence.
std::vector<std::size_t> rows_of(const std::vector<std::size_t>& sequence, const std::vector<std::size_t>& tokens) {
  std::vector<std::size_t> rows;
  rows.reserve(tokens.size());
  for (std::size_t t : tokens) {
    auto it = std::lower_bound(sequence.begin(), sequence.end(), t);
    rows.push_back(static_cast<std::size_t>(it - sequence.begin()));
  }
  return rows;
}

void check_plan(const ModelConfig& config, const MaskPlan& plan) {
  if (plan.grid != config.grid || plan.labels.size() != config.grid.count()) {
    throw ParameterError("mask plan grid " + std::to_string(plan.grid.rows) + "x" +
                         std::to_string(plan.grid.cols) + " does not match model grid " +
                         std::to_string(config.grid.rows) + "x" + std::to_string(config.grid.cols));
  }
}

// [N, D] sequence on the grid -> [D, rows, cols] and back.
Tensor to_spatial(const Tensor& seq, GridShape grid) {
  return reshape(transpose(seq), {seq.dim(1), grid.rows, grid.cols});
}

Tensor to_sequence(const Tensor& spatial) {
  const std::size_t d = spatial.dim(0);
  return transpose(reshape(spatial, {d, spatial.dim(1) * spatial.dim(2)}));
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  ParameterSet& p = model.params;
  Rng rng(seed);
  add_linear(p, "enc.patch_embed", config.patch_dim(), config.enc_dim, rng);
  p.add("enc.pos_embed", sincos_pos_table(config.grid, config.enc_dim));
  for (std::size_t i = 0; i < config.enc_depth; ++i)
    add_block(p, "enc.blocks." + std::to_string(i), config.enc_dim, config.mlp_hidden(config.enc_dim), rng);
  add_norm(p, "enc.norm", config.enc_dim);

  add_linear(p, "dec.embed", config.enc_dim, config.dec_dim, rng);
  p.add("dec.mask_token", trunc_normal({config.dec_dim}, rng));
  p.add("dec.pos_embed", sincos_pos_table(config.grid, config.dec_dim));
  for (std::size_t i = 0; i < config.dec_depth; ++i)
    add_block(p, "dec.blocks." + std::to_string(i), config.dec_dim, config.mlp_hidden(config.dec_dim), rng);
  add_norm(p, "dec.norm", config.dec_dim);
  add_linear(p, "head", config.dec_dim, config.patch_dim(), rng);

  const std::size_t k = config.kernel_size;
  switch (config.aggregation) {
    case Aggregation::DepthwiseConv:
      p.add("agg.kernel", trunc_normal({config.dec_dim, k, k}, rng));
      p.add("agg.bias", Tensor::zeros({config.dec_dim}, true));
      break;
    case Aggregation::ConvNextBlock:
      p.add("agg.kernel", trunc_normal({config.dec_dim, k, k}, rng));
      p.add("agg.bias", Tensor::zeros({config.dec_dim}, true));
      add_norm(p, "agg.norm", config.dec_dim);
      add_linear(p, "agg.fc1", config.dec_dim, config.mlp_hidden(config.dec_dim), rng);
      add_linear(p, "agg.fc2", config.mlp_hidden(config.dec_dim), config.dec_dim, rng);
      break;
    case Aggregation::TransformerBlock:
      add_block(p, "agg.block", config.dec_dim, config.mlp_hidden(config.dec_dim), rng);
      break;
    case Aggregation::AveragePool:
      break;
  }
  return model;
}

// ---- pipeline --------------------------------------------------------------

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw DimensionError("patchify: expected [C, H, W], got " + shape_str(image.shape()));
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2), p = patch_size;
  if (p == 0 || H % p != 0 || W % p != 0) {
    throw DimensionError("patchify: image " + shape_str(image.shape()) + " is not divisible into " +
                         std::to_string(p) + "x" + std::to_string(p) + " patches");
  }
  const std::size_t gh = H / p, gw = W / p;
  // Row order (patch_row, patch_col); within a patch (pixel_row, pixel_col, channel).
  std::vector<std::size_t> source;
  source.reserve(image.numel());
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t ch = 0; ch < C; ++ch) source.push_back((ch * H + r * p + i) * W + c * p + j);
  return reshape(gather_rows(reshape(image, {image.numel(), 1}), source), {gh * gw, p * p * C});
}

Tensor unpatchify(const Tensor& patches, GridShape grid, std::size_t patch_size, std::size_t channels) {
  const std::size_t p = patch_size, C = channels;
  if (patches.rank() != 2 || patches.dim(0) != grid.count() || patches.dim(1) != p * p * C) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) + " do not match the grid");
  }
  const std::size_t H = grid.rows * p, W = grid.cols * p;
  std::vector<std::size_t> source(C * H * W);
  std::size_t flat = 0;
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t ch = 0; ch < C; ++ch) source[(ch * H + r * p + i) * W + c * p + j] = flat++;
  return reshape(gather_rows(reshape(patches, {patches.numel(), 1}), source), {C, H, W});
}

Tensor normalize_targets(const Tensor& patches, double eps) {
  return layer_norm(patches, Tensor{}, Tensor{}, eps);
}

Tensor pixel_targets(const ModelConfig& config, const Tensor& image) {
  const Tensor patches = patchify(image, config.patch_size).detach();
  return config.norm_pix ? normalize_targets(patches).detach() : patches;
}

Tensor encode_tokens(const Model& model, const Tensor& patches, std::span<const std::size_t> tokens) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  if (tokens.empty()) throw ParameterError("encoder needs at least one unmasked token");
  if (patches.rank() != 2 || patches.dim(0) != cfg.grid.count() || patches.dim(1) != cfg.patch_dim()) {
    throw DimensionError("encode: patches " + shape_str(patches.shape()) + " do not match the model");
  }
  Tensor x = dense(p, "enc.patch_embed", gather_rows(patches, tokens));
  x = add(x, gather_rows(p.at("enc.pos_embed"), tokens));
  for (std::size_t i = 0; i < cfg.enc_depth; ++i) x = block(p, "enc.blocks." + std::to_string(i), x, cfg.enc_heads);
  return norm(p, "enc.norm", x);
}

Tensor encode(const Model& model, const Tensor& patches, const MaskPlan& plan) {
  check_plan(model.config, plan);
  return encode_tokens(model, patches, plan.tokens(TokenLabel::Unmasked));
}

DecodedSequence decode(const Model& model, const Tensor& encoded, const MaskPlan& plan) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  check_plan(cfg, plan);
  const auto visible = plan.tokens(TokenLabel::Unmasked);
  const auto retained = plan.tokens(TokenLabel::Retained);
  if (encoded.rank() != 2 || encoded.dim(0) != visible.size() || encoded.dim(1) != cfg.enc_dim) {
    throw DimensionError("decode: encoder output " + shape_str(encoded.shape()) + " does not match " +
                         std::to_string(visible.size()) + " unmasked tokens");
  }
  DecodedSequence out;
  out.tokens = ascending_union(visible, retained);
  std::vector<RowPlacement> parts;
  parts.push_back({dense(p, "dec.embed", encoded), rows_of(out.tokens, visible)});
  if (!retained.empty()) {
    parts.push_back({broadcast_rows(p.at("dec.mask_token"), retained.size()), rows_of(out.tokens, retained)});
  }
  Tensor x = assemble_rows(out.tokens.size(), parts);
  x = add(x, gather_rows(p.at("dec.pos_embed"), out.tokens));
  for (std::size_t i = 0; i < cfg.dec_depth; ++i) x = block(p, "dec.blocks." + std::to_string(i), x, cfg.dec_heads);
  out.features = x;
  return out;
}

Tensor spatial_aggregate(const Model& model, const DecodedSequence& decoded, const MaskPlan& plan) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  check_plan(cfg, plan);
  const auto thrown = plan.tokens(TokenLabel::Thrown);
  if (thrown.empty()) return Tensor::zeros({0, cfg.dec_dim});
  const std::size_t n = cfg.grid.count();
  const std::vector<RowPlacement> parts{{decoded.features, decoded.tokens}};
  const Tensor filled = assemble_rows(n, parts);  // zeros at thrown positions

  Tensor mixed;
  switch (cfg.aggregation) {
    case Aggregation::DepthwiseConv:
      mixed = to_sequence(depthwise_conv2d(to_spatial(filled, cfg.grid), p.at("agg.kernel"), p.at("agg.bias")));
      break;
    case Aggregation::AveragePool:
      mixed = to_sequence(avg_pool2d(to_spatial(filled, cfg.grid), cfg.kernel_size));
      break;
    case Aggregation::ConvNextBlock: {
      const Tensor conv =
          to_sequence(depthwise_conv2d(to_spatial(filled, cfg.grid), p.at("agg.kernel"), p.at("agg.bias")));
      mixed = add(filled, dense(p, "agg.fc2", gelu(dense(p, "agg.fc1", norm(p, "agg.norm", conv)))));
      break;
    }
    case Aggregation::TransformerBlock:
      mixed = block(p, "agg.block", add(filled, p.at("dec.pos_embed")), cfg.dec_heads);
      break;
  }
  return gather_rows(mixed, thrown);
}

Tensor predict_pixels(const Model& model, const Tensor& features) {
  return dense(model.params, "head", norm(model.params, "dec.norm", features));
}

PipelineOutput forward(const Model& model, const Tensor& image, const MaskPlan& plan, ReconstructionMode mode) {
  const auto& cfg = model.config;
  check_plan(cfg, plan);
  const MaskPlan effective = mode == ReconstructionMode::Full ? plan.without_throw() : plan;
  const auto retained = effective.tokens(TokenLabel::Retained);
  const auto thrown = effective.tokens(TokenLabel::Thrown);
  const bool aggregate = mode == ReconstructionMode::Progressive && !thrown.empty();
  if (retained.empty() && !aggregate) {
    throw ParameterError(std::string("mode '") + std::string(to_string(mode)) +
                         "' has no masked token to supervise under this plan");
  }

  const Tensor patches = patchify(image, cfg.patch_size);
  const Tensor encoded = encode(model, patches, effective);

  PipelineOutput out;
  out.decoded = decode(model, encoded, effective);
  std::vector<Tensor> predictions;
  if (!retained.empty()) {
    predictions.push_back(predict_pixels(model, gather_rows(out.decoded.features, rows_of(out.decoded.tokens, retained))));
  }
  out.loss_positions = retained;
  out.retained_rows = retained.size();
  if (aggregate) {
    predictions.push_back(predict_pixels(model, spatial_aggregate(model, out.decoded, effective)));
    out.loss_positions.insert(out.loss_positions.end(), thrown.begin(), thrown.end());
  }
  out.predictions = predictions.size() == 1 ? predictions[0] : concat_rows(predictions);
  return out;
}

}  // namespace prmim
