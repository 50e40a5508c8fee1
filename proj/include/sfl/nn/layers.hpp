#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/nn/rng.hpp"
#include "sfl/nn/tensor.hpp"

namespace sfl {

// Linear, Conv2d, ReLU, MaxPool2x2 and Flatten are the splittable units a
// victim network is built from. ConvTranspose2d and Sigmoid exist only for
// attacker-side decoders (generator, inversion model) and are rejected by
// split-model validation.
enum class UnitKind : std::uint8_t {
  Linear = 1,
  Conv2d = 2,
  ReLU = 3,
  MaxPool2x2 = 4,
  Flatten = 5,
  ConvTranspose2d = 6,
  Sigmoid = 7,
};

std::string to_string(UnitKind k);

struct UnitSpec {
  UnitKind kind = UnitKind::ReLU;
  int in = 0;  // features (Linear) or channels (convolutions)
  int out = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;

  static UnitSpec linear(int in, int out) { return {UnitKind::Linear, in, out}; }
  static UnitSpec conv2d(int in_ch, int out_ch, int k, int stride = 1, int pad = 0) {
    return {UnitKind::Conv2d, in_ch, out_ch, k, stride, pad};
  }
  static UnitSpec conv_transpose2d(int in_ch, int out_ch, int k, int stride = 1, int pad = 0) {
    return {UnitKind::ConvTranspose2d, in_ch, out_ch, k, stride, pad};
  }
  static UnitSpec relu() { return {UnitKind::ReLU}; }
  static UnitSpec maxpool2x2() { return {UnitKind::MaxPool2x2}; }
  static UnitSpec flatten() { return {UnitKind::Flatten}; }
  static UnitSpec sigmoid() { return {UnitKind::Sigmoid}; }

  bool has_params() const {
    return kind == UnitKind::Linear || kind == UnitKind::Conv2d || kind == UnitKind::ConvTranspose2d;
  }
  bool splittable() const { return static_cast<int>(kind) >= 1 && static_cast<int>(kind) <= 5; }

  Shape weight_shape() const;
  Shape bias_shape() const { return has_params() ? Shape{static_cast<std::size_t>(out)} : Shape{}; }

  bool operator==(const UnitSpec&) const = default;
};

std::string describe(const UnitSpec& u);

// Per-sample output shape of one unit; throws ShapeError naming `index`.
Shape output_shape(const UnitSpec& u, const Shape& in, int index);

// Per-sample shapes at every boundary: result[0] is `input`, result[i + 1]
// the output of unit i.
std::vector<Shape> infer_shapes(std::span<const UnitSpec> units, const Shape& input);

template <class T>
struct LayerParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  bool empty() const { return weight.empty() && bias.empty(); }
};

// Parameters aligned with a unit list: layers[i] belongs to unit i and is
// empty for parameter-free units.
template <class T>
struct ParamSet {
  std::vector<LayerParams<T>> layers;

  std::size_t size() const { return layers.size(); }
  LayerParams<T>& operator[](std::size_t i) { return layers[i]; }
  const LayerParams<T>& operator[](std::size_t i) const { return layers[i]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      out.layers.push_back({BasicTensor<T>(l.weight.dims()), BasicTensor<T>(l.bias.dims())});
    }
    return out;
  }

  // Visits every parameter tensor in unit order (weight before bias).
  template <class F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      if (!l.weight.empty()) f(l.weight);
      if (!l.bias.empty()) f(l.bias);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& l : layers) {
      if (!l.weight.empty()) f(l.weight);
      if (!l.bias.empty()) f(l.bias);
    }
  }

  std::vector<BasicTensor<T>*> tensors() {
    std::vector<BasicTensor<T>*> out;
    for_each([&](BasicTensor<T>& t) { out.push_back(&t); });
    return out;
  }
  std::vector<const BasicTensor<T>*> tensors() const {
    std::vector<const BasicTensor<T>*> out;
    for_each([&](const BasicTensor<T>& t) { out.push_back(&t); });
    return out;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& l : layers) out.layers.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    return out;
  }

  bool bit_equal(const ParamSet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!layers[i].weight.bit_equal(o.layers[i].weight) || !layers[i].bias.bit_equal(o.layers[i].bias)) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const BasicTensor<T>& t) { ok = ok && t.all_finite(); });
    return ok;
  }

  // Sub-range of layers [begin, end).
  ParamSet slice(std::size_t begin, std::size_t end) const {
    ParamSet out;
    out.layers.assign(layers.begin() + static_cast<std::ptrdiff_t>(begin),
                      layers.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }

  static ParamSet concat(const ParamSet& a, const ParamSet& b) {
    ParamSet out = a;
    out.layers.insert(out.layers.end(), b.layers.begin(), b.layers.end());
    return out;
  }
};

// Checks that `params` has the shapes `units` requires.
template <class T>
void check_params(std::span<const UnitSpec> units, const ParamSet<T>& params);

// Fan-in scaled uniform init: weights and biases ~ U(-b, b), b = sqrt(1/fan_in).
ParamSet<float> init_params(std::span<const UnitSpec> units, Rng rng);

}  // namespace sfl
