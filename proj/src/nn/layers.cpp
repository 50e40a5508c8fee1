#include "sfl/nn/layers.hpp"

#include <cmath>
#include <sstream>

namespace sfl {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

std::string to_string(UnitKind k) {
  switch (k) {
    case UnitKind::Linear: return "Linear";
    case UnitKind::Conv2d: return "Conv2d";
    case UnitKind::ReLU: return "ReLU";
    case UnitKind::MaxPool2x2: return "MaxPool2x2";
    case UnitKind::Flatten: return "Flatten";
    case UnitKind::ConvTranspose2d: return "ConvTranspose2d";
    case UnitKind::Sigmoid: return "Sigmoid";
  }
  return "Unknown";
}

std::string describe(const UnitSpec& u) {
  std::ostringstream os;
  os << to_string(u.kind);
  switch (u.kind) {
    case UnitKind::Linear: os << '(' << u.in << ", " << u.out << ')'; break;
    case UnitKind::Conv2d:
    case UnitKind::ConvTranspose2d:
      os << '(' << u.in << ", " << u.out << ", k=" << u.kernel << ", s=" << u.stride << ", p=" << u.pad << ')';
      break;
    default: break;
  }
  return os.str();
}

Shape UnitSpec::weight_shape() const {
  const auto in_s = static_cast<std::size_t>(in), out_s = static_cast<std::size_t>(out);
  const auto k = static_cast<std::size_t>(kernel);
  switch (kind) {
    case UnitKind::Linear: return {out_s, in_s};
    case UnitKind::Conv2d: return {out_s, in_s, k, k};
    case UnitKind::ConvTranspose2d: return {in_s, out_s, k, k};
    default: return {};
  }
}

Shape output_shape(const UnitSpec& u, const Shape& in, int index) {
  auto need_image = [&](const char* what) {
    if (in.size() != 3) throw ShapeError(std::string(what) + " expects (C, H, W) input, got " + to_string(in), index);
  };
  switch (u.kind) {
    case UnitKind::Linear: {
      if (u.in <= 0 || u.out <= 0) throw ShapeError("Linear needs positive sizes", index);
      if (numel_of(in) != static_cast<std::size_t>(u.in)) {
        throw ShapeError("Linear expects " + std::to_string(u.in) + " input features, got " + to_string(in), index);
      }
      return {static_cast<std::size_t>(u.out)};
    }
    case UnitKind::Conv2d: {
      need_image("Conv2d");
      if (u.kernel <= 0 || u.stride <= 0 || u.pad < 0 || u.out <= 0) {
        throw ShapeError("Conv2d has invalid hyper-parameters", index);
      }
      if (in[0] != static_cast<std::size_t>(u.in)) {
        throw ShapeError("Conv2d expects " + std::to_string(u.in) + " channels, got " + std::to_string(in[0]), index);
      }
      const long h = static_cast<long>(in[1]) + 2L * u.pad - u.kernel;
      const long w = static_cast<long>(in[2]) + 2L * u.pad - u.kernel;
      if (h < 0 || w < 0) throw ShapeError("Conv2d kernel larger than padded input", index);
      return {static_cast<std::size_t>(u.out), static_cast<std::size_t>(h / u.stride + 1),
              static_cast<std::size_t>(w / u.stride + 1)};
    }
    case UnitKind::ConvTranspose2d: {
      need_image("ConvTranspose2d");
      if (u.kernel <= 0 || u.stride <= 0 || u.pad < 0 || u.out <= 0) {
        throw ShapeError("ConvTranspose2d has invalid hyper-parameters", index);
      }
      if (in[0] != static_cast<std::size_t>(u.in)) {
        throw ShapeError("ConvTranspose2d expects " + std::to_string(u.in) + " channels", index);
      }
      const long h = (static_cast<long>(in[1]) - 1) * u.stride + u.kernel - 2L * u.pad;
      const long w = (static_cast<long>(in[2]) - 1) * u.stride + u.kernel - 2L * u.pad;
      if (h <= 0 || w <= 0) throw ShapeError("ConvTranspose2d output would be empty", index);
      return {static_cast<std::size_t>(u.out), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    }
    case UnitKind::ReLU:
    case UnitKind::Sigmoid: return in;
    case UnitKind::MaxPool2x2: {
      need_image("MaxPool2x2");
      if (in[1] < 2 || in[2] < 2) throw ShapeError("MaxPool2x2 input smaller than 2x2", index);
      return {in[0], in[1] / 2, in[2] / 2};
    }
    case UnitKind::Flatten: return {numel_of(in)};
  }
  throw ShapeError("unknown unit kind", index);
}

std::vector<Shape> infer_shapes(std::span<const UnitSpec> units, const Shape& input) {
  std::vector<Shape> shapes{input};
  shapes.reserve(units.size() + 1);
  for (std::size_t i = 0; i < units.size(); ++i) {
    shapes.push_back(output_shape(units[i], shapes.back(), static_cast<int>(i)));
  }
  return shapes;
}

template <class T>
void check_params(std::span<const UnitSpec> units, const ParamSet<T>& params) {
  if (params.size() != units.size()) {
    throw ShapeError("parameter set has " + std::to_string(params.size()) + " layers for " +
                     std::to_string(units.size()) + " units");
  }
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    const auto& p = params[i];
    if (u.weight_shape() != p.weight.dims() || u.bias_shape() != p.bias.dims()) {
      if (!(u.weight_shape().empty() && p.weight.empty() && p.bias.empty())) {
        throw ShapeError("parameters do not match " + describe(u), static_cast<int>(i));
      }
    }
  }
}

template void check_params(std::span<const UnitSpec>, const ParamSet<float>&);
template void check_params(std::span<const UnitSpec>, const ParamSet<double>&);

ParamSet<float> init_params(std::span<const UnitSpec> units, Rng rng) {
  ParamSet<float> params;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    LayerParams<float> lp;
    if (u.has_params()) {
      Rng r = rng.child(i);
      const Shape ws = u.weight_shape();
      const double fan_in = u.kind == UnitKind::ConvTranspose2d
                                ? static_cast<double>(ws[1] * ws[2] * ws[3])
                                : static_cast<double>(numel_of(ws) / ws[0]);
      const double bound = std::sqrt(1.0 / fan_in);
      lp.weight = Tensor(ws);
      for (auto& v : lp.weight.storage()) v = static_cast<float>(r.uniform(-bound, bound));
      lp.bias = Tensor(u.bias_shape());
      for (auto& v : lp.bias.storage()) v = static_cast<float>(r.uniform(-bound, bound));
    }
    params.layers.push_back(std::move(lp));
  }
  return params;
}

}  // namespace sfl
