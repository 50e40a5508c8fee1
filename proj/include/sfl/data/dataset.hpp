#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/nn/rng.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl {

// Labelled image set: images are (count, C, H, W) with pixels in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return images.sample_shape(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  // Throws Error if count, label range or pixel range is violated.
  void validate() const;
};

// IDX files: big-endian u32 magic (0x00000803 images, 0x00000801 labels),
// big-endian u32 dims, u8 payload. Pixels are scaled to [0, 1].
Tensor decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes);
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int n_classes);

// Class-conditional blob images. Each class owns a prototype made of a few
// Gaussian blobs drawn from `prototype_seed`; every sample re-renders its
// class prototype with jittered blob centres, widths and amplitudes plus
// pixel noise. Labels are balanced (round robin) then shuffled.
struct SyntheticSpec {
  int n_classes = 10;
  std::size_t count = 1000;
  int channels = 1;
  int height = 12;
  int width = 12;
  std::uint64_t seed = 0;
  std::uint64_t prototype_seed = 0;
  int blobs_per_class = 3;
  double jitter = 0.8;  // pixels
  double noise = 0.1;   // pixel noise standard deviation

  bool operator==(const SyntheticSpec&) const = default;
};

Dataset synthesize(const SyntheticSpec& spec);

// Uniform [0, 1] pixels: the attacker's "noise data".
Tensor uniform_noise(std::size_t count, const Shape& sample_shape, Rng rng);

}  // namespace sfl
