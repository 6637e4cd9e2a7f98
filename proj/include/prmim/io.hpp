#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "prmim/model.hpp"
#include "prmim/tensor.hpp"

namespace prmim {

// Binary PPM ("P6", maxval 255) <-> [3, height, width] tensor in [0, 1].
Tensor read_ppm(const std::filesystem::path& path);
// Single-channel images are written as gray. Values are clamped to [0, 1]
// and rounded half-up to 8 bits.
void write_ppm(const Tensor& image, const std::filesystem::path& path);

// "PRMIM1", then per tensor: u32 name length, name, u32 rank, u32 dims,
// float32 values; all integers and floats little-endian.
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

// Replaces every parameter of the model with the stored values. Names and
// shapes must match exactly.
void load_parameters(Model& model, const std::filesystem::path& path);

}  // namespace prmim
