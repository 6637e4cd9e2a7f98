#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "prmim/tensor.hpp"

namespace prmim {

enum class SynthKind { Gradient, Checker, GaussianBlobs, Noise, Lines };

std::string_view to_string(SynthKind k);
SynthKind parse_synth_kind(std::string_view name);

struct SynthImageSpec {
  SynthKind kind = SynthKind::GaussianBlobs;
  std::size_t size = 32;  // square images, size x size pixels
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  std::size_t cell = 0;  // checker cell size in pixels; 0 draws one per image
};

// Image i of a batch depends only on (spec.seed, i). Values lie in [0, 1],
// layout is [channels, size, size].
Tensor synth_image(const SynthImageSpec& spec, std::size_t index);
std::vector<Tensor> synth_batch(const SynthImageSpec& spec, std::size_t batch_size);

}  // namespace prmim
