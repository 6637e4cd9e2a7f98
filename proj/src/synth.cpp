#include "prmim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prmim/errors.hpp"
#include "prmim/random.hpp"

namespace prmim {

std::string_view to_string(SynthKind k) {
  switch (k) {
    case SynthKind::Gradient: return "gradient";
    case SynthKind::Checker: return "checker";
    case SynthKind::GaussianBlobs: return "gaussian_blobs";
    case SynthKind::Noise: return "noise";
    case SynthKind::Lines: return "lines";
  }
  return "unknown";
}

SynthKind parse_synth_kind(std::string_view name) {
  for (auto k : {SynthKind::Gradient, SynthKind::Checker, SynthKind::GaussianBlobs, SynthKind::Noise, SynthKind::Lines})
    if (to_string(k) == name) return k;
  throw UsageError("unknown image generator '" + std::string(name) + "'");
}

namespace {

// Ramp from 0 at one corner to 1 at the opposite one; the seed picks the corner.
void fill_gradient(std::vector<double>& px, std::size_t C, std::size_t S, Rng& rng) {
  const std::size_t corner = rng.uniform_index(4);
  const double span = S > 1 ? double(S - 1) : 1.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double fy = (corner & 1) ? 1.0 - double(y) / span : double(y) / span;
        const double fx = (corner & 2) ? 1.0 - double(x) / span : double(x) / span;
        px[(c * S + y) * S + x] = S > 1 ? 0.5 * (fy + fx) : 0.0;
      }
}

void fill_checker(std::vector<double>& px, std::size_t C, std::size_t S, std::size_t fixed_cell, Rng& rng) {
  const std::size_t cell = fixed_cell > 0 ? fixed_cell : 2 + rng.uniform_index(std::max<std::size_t>(S / 4, 1));
  const std::size_t oy = rng.uniform_index(cell), ox = rng.uniform_index(cell);
  for (std::size_t c = 0; c < C; ++c) {
    const double a = rng.uniform01(), b = rng.uniform01();
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x)
        px[(c * S + y) * S + x] = (((y + oy) / cell + (x + ox) / cell) % 2 == 0) ? a : b;
  }
}

void fill_blobs(std::vector<double>& px, std::size_t C, std::size_t S, Rng& rng) {
  std::vector<double> background(C);
  for (double& b : background) b = rng.uniform(0.0, 0.5);
  for (std::size_t c = 0; c < C; ++c)
    std::fill_n(px.begin() + long(c * S * S), S * S, background[c]);
  const std::size_t blobs = 1 + rng.uniform_index(4);
  for (std::size_t k = 0; k < blobs; ++k) {
    const double cy = rng.uniform(0.0, double(S)), cx = rng.uniform(0.0, double(S));
    const double sigma = rng.uniform(0.08, 0.25) * double(S);
    std::vector<double> amp(C);
    for (double& a : amp) a = rng.uniform(-0.5, 0.5);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const double dy = double(y) + 0.5 - cy, dx = double(x) + 0.5 - cx;
        const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < C; ++c) px[(c * S + y) * S + x] += amp[c] * w;
      }
  }
  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
}

// Gray one-pixel horizontal and vertical lines on a flat gray background.
void fill_lines(std::vector<double>& px, std::size_t C, std::size_t S, Rng& rng) {
  const double background = rng.uniform(0.0, 0.4);
  const double line = rng.uniform(background + 0.3, 1.0);
  std::fill(px.begin(), px.end(), background);
  for (int vertical = 0; vertical < 2; ++vertical) {
    const std::size_t count = 1 + rng.uniform_index(2);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t at = rng.uniform_index(S);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < S; ++i) px[(c * S + (vertical ? i : at)) * S + (vertical ? at : i)] = line;
    }
  }
}

}  // namespace

Tensor synth_image(const SynthImageSpec& spec, std::size_t index) {
  if (spec.size == 0 || spec.channels == 0) throw ParameterError("synthetic images need a positive size and channel count");
  const std::size_t C = spec.channels, S = spec.size;
  std::vector<double> px(C * S * S, 0.0);
  Rng rng(derive_seed(spec.seed, index));
  switch (spec.kind) {
    case SynthKind::Gradient: fill_gradient(px, C, S, rng); break;
    case SynthKind::Checker: fill_checker(px, C, S, spec.cell, rng); break;
    case SynthKind::GaussianBlobs: fill_blobs(px, C, S, rng); break;
    case SynthKind::Noise:
      for (double& v : px) v = rng.uniform01();
      break;
    case SynthKind::Lines: fill_lines(px, C, S, rng); break;
  }
  return Tensor::from_data({C, S, S}, std::move(px));
}

std::vector<Tensor> synth_batch(const SynthImageSpec& spec, std::size_t batch_size) {
  std::vector<Tensor> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(synth_image(spec, i));
  return batch;
}

}  // namespace prmim
