#pragma once

#include <utility>
#include <vector>

#include "sfl/nn/network.hpp"

namespace sfl {

// Head units, a reshape of the head output to `seed_shape`, then tail units.
// Used for the attacker-side generator and the inversion decoder, whose
// projections need a flat-to-image step the unit list cannot express.
struct Decoder {
  std::vector<UnitSpec> head, tail;
  ParamSet<float> head_params, tail_params;
  Shape seed_shape;

  struct Pass {
    Activations<float> head, tail;
    const Tensor& output() const { return tail.back(); }
  };

  Pass run(const Tensor& x) const;
  Tensor output(const Tensor& x) const { return run(x).output(); }
  // Parameter gradients (head, tail) for upstream gradient `dout`.
  std::pair<ParamSet<float>, ParamSet<float>> backward(const Pass& p, const Tensor& dout) const;
  // Per-sample output shape for per-sample input shape `in`; validates both parts.
  Shape output_shape(const Shape& in) const;
};

// Two stride-2 up-sampling stages ConvT(k4, s2, p1) -> ReLU ->
// ConvT(k4, s2, p1) -> Sigmoid from (c0, H/4, W/4) to `image_shape`, after
// the given head. Parameters are initialized from `rng`.
Decoder make_upsampling_decoder(std::vector<UnitSpec> head, const Shape& head_input, int c0, const Shape& image_shape,
                                Rng rng);

}  // namespace sfl
