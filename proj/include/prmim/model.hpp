#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prmim/geometry.hpp"
#include "prmim/tensor.hpp"

namespace prmim {

enum class Aggregation { DepthwiseConv, TransformerBlock, ConvNextBlock, AveragePool };

// Full: decode every masked token (any throw in the plan is ignored).
// Partial: decode and supervise retained tokens only.
// Progressive: as Partial, plus spatial aggregation reconstructs thrown tokens.
enum class ReconstructionMode { Full, Partial, Progressive };

std::string_view to_string(Aggregation a);
std::string_view to_string(ReconstructionMode m);
Aggregation parse_aggregation(std::string_view name);
ReconstructionMode parse_mode(std::string_view name);

struct ModelConfig {
  GridShape grid{8, 8};
  std::size_t patch_size = 4;
  std::size_t in_channels = 3;
  std::size_t enc_dim = 32;
  std::size_t enc_depth = 2;
  std::size_t enc_heads = 2;
  std::size_t dec_dim = 16;
  std::size_t dec_depth = 1;
  std::size_t dec_heads = 2;
  double mlp_ratio = 4.0;
  std::size_t kernel_size = 7;
  Aggregation aggregation = Aggregation::DepthwiseConv;
  bool norm_pix = true;
  ReconstructionMode mode = ReconstructionMode::Progressive;

  std::size_t patch_dim() const { return patch_size * patch_size * in_channels; }
  std::size_t image_height() const { return grid.rows * patch_size; }
  std::size_t image_width() const { return grid.cols * patch_size; }
  std::size_t mlp_hidden(std::size_t dim) const;
  void validate() const;

  // Smallest configuration that exercises every mechanism.
  static ModelConfig toy();
  // ViT-B/16 encoder with the standard MAE decoder at 224x224.
  static ModelConfig vit_base_mae();
};

/// Named tensors of a model. Trainable entries require gradients; the fixed
/// positional tables are stored alongside them but do not.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  const std::map<std::string, Tensor, std::less<>>& entries() const { return entries_; }
  std::vector<std::string> trainable_names() const;
  std::size_t trainable_size() const;
  void zero_grad();
  ParameterSet clone() const;

 private:
  std::map<std::string, Tensor, std::less<>> entries_;
};

struct Model {
  ModelConfig config;
  ParameterSet params;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

// Fixed 2-D sine/cosine table [rows*cols, dim]; dim must be divisible by 4.
Tensor sincos_pos_table(GridShape grid, std::size_t dim);

Tensor patchify(const Tensor& image, std::size_t patch_size);
Tensor unpatchify(const Tensor& patches, GridShape grid, std::size_t patch_size, std::size_t channels);
Tensor normalize_targets(const Tensor& patches, double eps = 1e-6);

// Encoder over an explicit ordered token list (used for equivariance checks).
Tensor encode_tokens(const Model& model, const Tensor& patches, std::span<const std::size_t> tokens);
// Encoder over the plan's unmasked tokens in ascending order.
Tensor encode(const Model& model, const Tensor& patches, const MaskPlan& plan);

struct DecodedSequence {
  Tensor features;                  // [tokens.size(), dec_dim]
  std::vector<std::size_t> tokens;  // grid index of every row, ascending
};

// Sequence = unmasked tokens (projected encoder output) plus [MASK] copies at
// retained positions. Thrown tokens are absent.
DecodedSequence decode(const Model& model, const Tensor& encoded, const MaskPlan& plan);

// Reconstructs thrown tokens from the decoder output on the zero-filled grid.
// Returns [|x_t|, dec_dim] in ascending token order.
Tensor spatial_aggregate(const Model& model, const DecodedSequence& decoded, const MaskPlan& plan);

// Shared final norm + linear head: [M, dec_dim] -> [M, patch_dim].
Tensor predict_pixels(const Model& model, const Tensor& features);

struct PipelineOutput {
  Tensor predictions;                       // one row per loss position
  std::vector<std::size_t> loss_positions;  // retained (ascending) then thrown (ascending)
  std::size_t retained_rows = 0;            // leading rows that came from the decoder
  DecodedSequence decoded;
};

PipelineOutput forward(const Model& model, const Tensor& image, const MaskPlan& plan,
                       ReconstructionMode mode);

// Pixel targets for an image: patchified and, when norm_pix is set,
// normalized per patch.
Tensor pixel_targets(const ModelConfig& config, const Tensor& image);

}  // namespace prmim
