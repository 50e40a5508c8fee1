#pragma once

#include "sfl/nn/rng.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl {

struct AugmentConfig {
  bool enabled = true;
  double flip_prob = 0.5;
  double max_rotation_deg = 15.0;
};

// In-place transforms of one (C, H, W) sample.
void flip_horizontal(std::span<float> sample, std::size_t channels, std::size_t height, std::size_t width);
// Rotation about the image centre, nearest-neighbour resampling, zero fill.
void rotate(std::span<float> sample, std::size_t channels, std::size_t height, std::size_t width, double degrees);

// Independent random flip and rotation per sample (sample i draws from
// rng.child(i)); output clamped to [0, 1].
Tensor augment(const Tensor& batch, const AugmentConfig& cfg, Rng rng);

}  // namespace sfl
