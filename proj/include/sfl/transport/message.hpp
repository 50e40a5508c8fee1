#pragma once
// Protocol messages and their wire encoding.
//
// Frame: u32 LE payload length, u8 tag, payload. Payloads (little-endian):
//   Hello      tag 1: u32 client
//   SyncModel  tag 2: u32 count, count x tensor
//   Activation tag 3: u32 client, u64 step, tensor A, u32 n, n x u32 label
//   Gradient   tag 4: u32 client, u64 step, tensor dA
//   EndEpoch   tag 5: u32 epoch
// tensor: u8 rank, u32 x rank dims, f32 x numel data.
// No message carries logits, probabilities or predicted labels.

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sfl/nn/tensor.hpp"

namespace sfl {

enum class MessageTag : std::uint8_t { Hello = 1, SyncModel = 2, Activation = 3, Gradient = 4, EndEpoch = 5 };

struct HelloMsg {
  std::uint32_t client = 0;
  bool operator==(const HelloMsg&) const = default;
};

struct SyncModelMsg {
  std::vector<Tensor> tensors;
  bool operator==(const SyncModelMsg& o) const;
};

struct ActivationMsg {
  std::uint32_t client = 0;
  std::uint64_t step = 0;
  Tensor activation;
  std::vector<int> labels;
  bool operator==(const ActivationMsg& o) const;
};

struct GradientMsg {
  std::uint32_t client = 0;
  std::uint64_t step = 0;
  Tensor grad;
  bool operator==(const GradientMsg& o) const;
};

struct EndEpochMsg {
  std::uint32_t epoch = 0;
  bool operator==(const EndEpochMsg&) const = default;
};

using Message = std::variant<HelloMsg, SyncModelMsg, ActivationMsg, GradientMsg, EndEpochMsg>;

MessageTag tag_of(const Message& m);

inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::size_t kMaxTensorRank = 8;

// One complete frame, header included.
std::vector<std::uint8_t> encode(const Message& m);

// Decodes exactly one frame occupying all of `frame`. Throws DecodeError on
// truncation, trailing bytes, unknown tags or malformed payloads.
Message decode(std::span<const std::uint8_t> frame);

// Splits a concatenation of frames. Throws DecodeError if the last frame is
// incomplete.
std::vector<std::span<const std::uint8_t>> split_frames(std::span<const std::uint8_t> stream);
std::vector<Message> decode_stream(std::span<const std::uint8_t> stream);

}  // namespace sfl
