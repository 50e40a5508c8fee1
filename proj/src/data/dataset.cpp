#include "sfl/data/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/bytes.hpp"

namespace sfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.n_classes = n_classes;
  out.images = gather_rows(images, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

void Dataset::validate() const {
  if (n_classes < 1) throw Error("dataset: n_classes must be positive");
  if (images.batch() != labels.size()) {
    throw Error("dataset: " + std::to_string(images.batch()) + " images but " + std::to_string(labels.size()) +
                " labels");
  }
  if (images.rank() != 4) throw ShapeError("dataset: images must be (count, C, H, W), got " + to_string(images.dims()));
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw Error("dataset: label " + std::to_string(y) + " out of range");
  }
  for (float v : images.span()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw Error("dataset: pixel outside [0, 1]");
  }
}

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
  if (b.size() < off + 4) throw FormatError("idx: truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

Tensor decode_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxImages) throw FormatError("idx: bad image magic " + std::to_string(magic));
  const std::size_t n = read_be32(bytes, 4), h = read_be32(bytes, 8), w = read_be32(bytes, 12);
  const std::size_t payload = n * h * w;
  if (bytes.size() - 16 < payload) throw FormatError("idx: truncated image payload");
  Tensor out({n, 1, h, w});
  for (std::size_t i = 0; i < payload; ++i) out[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return out;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxLabels) throw FormatError("idx: bad label magic " + std::to_string(magic));
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() - 8 < n) throw FormatError("idx: truncated label payload");
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int n_classes) {
  Dataset d;
  d.images = decode_idx_images(read_file(images_path));
  d.labels = decode_idx_labels(read_file(labels_path));
  d.n_classes = n_classes;
  d.validate();
  return d;
}

namespace {

struct Blob {
  int channel;
  double cy, cx, sigma, amp;
};

std::vector<std::vector<Blob>> make_prototypes(const SyntheticSpec& s) {
  const Rng root = Rng(s.prototype_seed).child("prototypes");
  std::vector<std::vector<Blob>> protos(static_cast<std::size_t>(s.n_classes));
  for (int c = 0; c < s.n_classes; ++c) {
    Rng r = root.child(static_cast<std::uint64_t>(c));
    for (int b = 0; b < s.blobs_per_class; ++b) {
      Blob blob;
      blob.channel = static_cast<int>(r.below(static_cast<std::uint64_t>(s.channels)));
      blob.cy = r.uniform(1.5, s.height - 2.5);
      blob.cx = r.uniform(1.5, s.width - 2.5);
      blob.sigma = r.uniform(0.8, 2.2);
      blob.amp = r.uniform(0.5, 1.0);
      protos[static_cast<std::size_t>(c)].push_back(blob);
    }
  }
  return protos;
}

}  // namespace

Dataset synthesize(const SyntheticSpec& s) {
  if (s.n_classes < 1 || s.channels < 1 || s.height < 4 || s.width < 4 || s.blobs_per_class < 1) {
    throw Error("synthetic spec: invalid sizes");
  }
  const auto protos = make_prototypes(s);
  const Rng root(s.seed);
  Dataset d;
  d.n_classes = s.n_classes;
  d.labels.resize(s.count);
  for (std::size_t i = 0; i < s.count; ++i) d.labels[i] = static_cast<int>(i % static_cast<std::size_t>(s.n_classes));
  root.child("labels").shuffle(d.labels.begin(), d.labels.end());

  const std::size_t C = static_cast<std::size_t>(s.channels), H = static_cast<std::size_t>(s.height),
                    W = static_cast<std::size_t>(s.width);
  d.images = Tensor({s.count, C, H, W});
  const Rng samples = root.child("samples");
  std::vector<double> img(C * H * W);
  for (std::size_t i = 0; i < s.count; ++i) {
    Rng r = samples.child(static_cast<std::uint64_t>(i));
    std::fill(img.begin(), img.end(), 0.0);
    for (const Blob& b : protos[static_cast<std::size_t>(d.labels[i])]) {
      const double cy = b.cy + s.jitter * r.normal();
      const double cx = b.cx + s.jitter * r.normal();
      const double sigma = b.sigma * r.uniform(0.8, 1.2);
      const double amp = b.amp * r.uniform(0.7, 1.3);
      const double inv = 1.0 / (2.0 * sigma * sigma);
      double* plane = img.data() + static_cast<std::size_t>(b.channel) * H * W;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          plane[y * W + x] += amp * std::exp(-(dy * dy + dx * dx) * inv);
        }
      }
    }
    float* out = d.images.data() + i * C * H * W;
    for (std::size_t k = 0; k < img.size(); ++k) {
      out[k] = static_cast<float>(std::clamp(img[k] + s.noise * r.normal(), 0.0, 1.0));
    }
  }
  return d;
}

Tensor uniform_noise(std::size_t count, const Shape& sample_shape, Rng rng) {
  Shape dims{count};
  dims.insert(dims.end(), sample_shape.begin(), sample_shape.end());
  Tensor t(dims);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}

}  // namespace sfl
