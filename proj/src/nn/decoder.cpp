#include "sfl/nn/decoder.hpp"

namespace sfl {

Decoder::Pass Decoder::run(const Tensor& x) const {
  Pass p;
  p.head = forward<float>(head, head_params, x);
  Shape dims{x.batch()};
  dims.insert(dims.end(), seed_shape.begin(), seed_shape.end());
  p.tail = forward<float>(tail, tail_params, p.head.back().reshaped(dims));
  return p;
}

std::pair<ParamSet<float>, ParamSet<float>> Decoder::backward(const Pass& p, const Tensor& dout) const {
  auto gt = sfl::backward<float>(tail, tail_params, p.tail, dout, BackwardOptions{true, true});
  auto gh = sfl::backward<float>(head, head_params, p.head, gt.input.reshaped(p.head.back().dims()),
                                 BackwardOptions{true, false});
  return {std::move(gh.params), std::move(gt.params)};
}

Shape Decoder::output_shape(const Shape& in) const {
  const Shape h = infer_shapes(head, in).back();
  if (numel_of(h) != numel_of(seed_shape)) {
    throw ShapeError("decoder: head output " + to_string(h) + " cannot be viewed as " + to_string(seed_shape));
  }
  return infer_shapes(tail, seed_shape).back();
}

Decoder make_upsampling_decoder(std::vector<UnitSpec> head, const Shape& head_input, int c0, const Shape& image_shape,
                                Rng rng) {
  if (image_shape.size() != 3 || image_shape[1] % 4 != 0 || image_shape[2] % 4 != 0 || image_shape[1] == 0 ||
      image_shape[2] == 0) {
    throw ShapeError("decoder: image shape " + to_string(image_shape) + " needs sides divisible by 4");
  }
  if (c0 < 2) throw ShapeError("decoder: needs at least 2 seed channels");
  Decoder d;
  d.head = std::move(head);
  d.seed_shape = {static_cast<std::size_t>(c0), image_shape[1] / 4, image_shape[2] / 4};
  d.tail = {UnitSpec::conv_transpose2d(c0, c0 / 2, 4, 2, 1), UnitSpec::relu(),
            UnitSpec::conv_transpose2d(c0 / 2, static_cast<int>(image_shape[0]), 4, 2, 1), UnitSpec::sigmoid()};
  if (d.output_shape(head_input) != image_shape) throw ShapeError("decoder: output shape mismatch");
  d.head_params = init_params(d.head, rng.child("head"));
  d.tail_params = init_params(d.tail, rng.child("tail"));
  return d;
}

}  // namespace sfl
