#include "sfl/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace sfl {

void flip_horizontal(std::span<float> sample, std::size_t channels, std::size_t height, std::size_t width) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      float* row = sample.data() + (c * height + y) * width;
      std::reverse(row, row + width);
    }
  }
}

void rotate(std::span<float> sample, std::size_t channels, std::size_t height, std::size_t width, double degrees) {
  if (degrees == 0.0) return;
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = (static_cast<double>(height) - 1.0) / 2.0, cx = (static_cast<double>(width) - 1.0) / 2.0;
  std::vector<float> src(sample.begin(), sample.end());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      // Inverse map of the destination pixel into the source image.
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const long sy = std::lround(cy + cs * dy - sn * dx);
      const long sx = std::lround(cx + sn * dy + cs * dx);
      const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(height) && sx < static_cast<long>(width);
      for (std::size_t c = 0; c < channels; ++c) {
        sample[(c * height + y) * width + x] =
            inside ? src[(c * height + static_cast<std::size_t>(sy)) * width + static_cast<std::size_t>(sx)] : 0.0f;
      }
    }
  }
}

Tensor augment(const Tensor& batch, const AugmentConfig& cfg, Rng rng) {
  Tensor out = batch;
  if (!cfg.enabled) return out;
  if (batch.rank() != 4) throw ShapeError("augment: batch must be (B, C, H, W), got " + to_string(batch.dims()));
  const std::size_t C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  for (std::size_t i = 0; i < batch.batch(); ++i) {
    Rng r = rng.child(static_cast<std::uint64_t>(i));
    auto s = out.row(i);
    if (r.uniform() < cfg.flip_prob) flip_horizontal(s, C, H, W);
    rotate(s, C, H, W, r.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg));
    for (auto& v : s) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace sfl
