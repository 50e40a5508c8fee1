#pragma once

#include <string>
#include <vector>

#include "sfl/nn/layers.hpp"
#include "sfl/nn/network.hpp"

namespace sfl {

// A complete sequential network: architecture, parameters and per-sample
// input shape.
struct Model {
  std::vector<UnitSpec> units;
  ParamSet<float> params;
  Shape input_shape;

  std::size_t size() const { return units.size(); }

  // Logits for a batch, evaluated in chunks of `chunk` samples.
  Tensor logits(const Tensor& x, std::size_t chunk = 512) const;
  std::vector<int> predict(const Tensor& x, std::size_t chunk = 512) const;

  void validate() const;
};

Model make_model(std::vector<UnitSpec> units, Shape input_shape, Rng rng);

// Checkpoint file: "SFLX" magic, u16 version, little-endian throughout.
//   input shape: u8 rank, u32 x rank
//   units:       u32 count, then per unit u8 kind, u8 n, i32 x n
//                (Linear: in,out; Conv2d/ConvTranspose2d: in,out,k,stride,pad)
//   tensors:     u32 count, then per tensor u8 rank, u32 x rank, f32 x numel
//                (weight then bias for every unit with parameters, in order)
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& m);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace sfl
