#include "sfl/core/split.hpp"

namespace sfl {

Shape SplitModel::cut_shape() const { return infer_shapes(units, input_shape)[cut()]; }

Model SplitModel::join() const {
  Model m{units, ParamSet<float>::concat(client, server), input_shape};
  return m;
}

SplitModel split(const Model& m, int N) {
  const int L = static_cast<int>(m.units.size());
  if (L < 2) throw Error("split: a model needs at least 2 units");
  if (N < 1 || N > L - 1) {
    throw Error("split: N = " + std::to_string(N) + " outside [1, " + std::to_string(L - 1) +
                "]; the client must keep at least one unit");
  }
  for (std::size_t i = 0; i < m.units.size(); ++i) {
    if (!m.units[i].splittable()) {
      throw ShapeError(to_string(m.units[i].kind) + " cannot appear in a split model", static_cast<int>(i));
    }
  }
  m.validate();
  SplitModel s;
  s.units = m.units;
  s.N = N;
  s.input_shape = m.input_shape;
  s.client = m.params.slice(0, s.cut());
  s.server = m.params.slice(s.cut(), m.units.size());
  return s;
}

ParamSet<float> average_params(std::span<const ParamSet<float>* const> copies) {
  if (copies.empty()) throw Error("synchronize: no copies");
  ParamSet<float> mean = copies[0]->zeros_like();
  const auto dst = mean.tensors();
  std::vector<std::vector<const Tensor*>> src;
  for (const auto* c : copies) {
    auto t = c->tensors();
    if (t.size() != dst.size()) throw ShapeError("synchronize: parameter sets differ in structure");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i]->dims() != dst[i]->dims()) {
        throw ShapeError("synchronize: tensor " + std::to_string(i) + " has shape " + to_string(t[i]->dims()) +
                         ", expected " + to_string(dst[i]->dims()));
      }
    }
    src.push_back(std::move(t));
  }
  const double count = static_cast<double>(copies.size());
  for (std::size_t ti = 0; ti < dst.size(); ++ti) {
    Tensor& out = *dst[ti];
    for (std::size_t e = 0; e < out.numel(); ++e) {
      double acc = 0.0;
      for (const auto& s : src) acc += static_cast<double>((*s[ti])[e]);
      out[e] = static_cast<float>(acc / count);
    }
  }
  return mean;
}

ParamSet<float> synchronize(std::span<ParamSet<float>* const> copies) {
  std::vector<const ParamSet<float>*> view(copies.begin(), copies.end());
  ParamSet<float> mean = average_params(view);
  for (auto* c : copies) *c = mean;
  return mean;
}

}  // namespace sfl
