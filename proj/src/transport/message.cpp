#include "sfl/transport/message.hpp"

#include <limits>

#include "sfl/bytes.hpp"

namespace sfl {

bool SyncModelMsg::operator==(const SyncModelMsg& o) const {
  if (tensors.size() != o.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].bit_equal(o.tensors[i])) return false;
  }
  return true;
}

bool ActivationMsg::operator==(const ActivationMsg& o) const {
  return client == o.client && step == o.step && activation.bit_equal(o.activation) && labels == o.labels;
}

bool GradientMsg::operator==(const GradientMsg& o) const {
  return client == o.client && step == o.step && grad.bit_equal(o.grad);
}

MessageTag tag_of(const Message& m) { return static_cast<MessageTag>(m.index() + 1); }

namespace {

void put_tensor(ByteWriter& w, const Tensor& t) {
  if (t.rank() > kMaxTensorRank) throw Error("encode: tensor rank " + std::to_string(t.rank()) + " too large");
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw Error("encode: tensor dimension too large");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  w.put_array<float>(t.span());
}

Tensor get_tensor(ByteReader& r) {
  const auto rank = r.get<std::uint8_t>();
  if (rank > kMaxTensorRank) throw DecodeError("tensor rank " + std::to_string(rank) + " exceeds limit");
  Shape dims(rank);
  std::size_t n = rank == 0 ? 0 : 1;
  for (auto& d : dims) {
    d = r.get<std::uint32_t>();
    if (__builtin_mul_overflow(n, d, &n)) throw DecodeError("tensor dims overflow");
  }
  if (n > r.remaining() / sizeof(float)) {
    throw DecodeError("tensor dims " + to_string(dims) + " need " + std::to_string(n) + " floats, " +
                      std::to_string(r.remaining()) + " remain");
  }
  Tensor t(dims);
  r.get_array<float>(t.span());
  return t;
}

struct PayloadWriter {
  ByteWriter& w;
  void operator()(const HelloMsg& m) { w.put<std::uint32_t>(m.client); }
  void operator()(const SyncModelMsg& m) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.tensors.size()));
    for (const auto& t : m.tensors) put_tensor(w, t);
  }
  void operator()(const ActivationMsg& m) {
    w.put<std::uint32_t>(m.client);
    w.put<std::uint64_t>(m.step);
    put_tensor(w, m.activation);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.labels.size()));
    for (int y : m.labels) {
      if (y < 0) throw Error("encode: negative label");
      w.put<std::uint32_t>(static_cast<std::uint32_t>(y));
    }
  }
  void operator()(const GradientMsg& m) {
    w.put<std::uint32_t>(m.client);
    w.put<std::uint64_t>(m.step);
    put_tensor(w, m.grad);
  }
  void operator()(const EndEpochMsg& m) { w.put<std::uint32_t>(m.epoch); }
};

}  // namespace

std::vector<std::uint8_t> encode(const Message& m) {
  ByteWriter w;
  w.put<std::uint32_t>(0);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(tag_of(m)));
  std::visit(PayloadWriter{w}, m);
  auto bytes = w.take();
  const std::size_t payload = bytes.size() - kFrameHeaderBytes;
  if (payload > std::numeric_limits<std::uint32_t>::max()) throw Error("encode: message too large");
  const auto len = static_cast<std::uint32_t>(payload);
  std::memcpy(bytes.data(), &len, sizeof(len));
  return bytes;
}

Message decode(std::span<const std::uint8_t> frame) {
  ByteReader header(frame);
  if (frame.size() < kFrameHeaderBytes) {
    throw DecodeError("frame truncated: " + std::to_string(frame.size()) + " bytes, header needs " +
                      std::to_string(kFrameHeaderBytes));
  }
  const auto len = header.get<std::uint32_t>();
  const auto tag = header.get<std::uint8_t>();
  if (frame.size() - kFrameHeaderBytes < len) {
    throw DecodeError("frame truncated: length field " + std::to_string(len) + " but " +
                      std::to_string(frame.size() - kFrameHeaderBytes) + " payload bytes");
  }
  if (frame.size() - kFrameHeaderBytes > len) throw DecodeError("trailing bytes after frame");
  ByteReader r(frame.subspan(kFrameHeaderBytes, len));
  Message out;
  switch (tag) {
    case 1: out = HelloMsg{r.get<std::uint32_t>()}; break;
    case 2: {
      SyncModelMsg m;
      const auto count = r.get<std::uint32_t>();
      if (count > r.remaining()) throw DecodeError("sync model: tensor count exceeds payload");
      for (std::uint32_t i = 0; i < count; ++i) m.tensors.push_back(get_tensor(r));
      out = std::move(m);
      break;
    }
    case 3: {
      ActivationMsg m;
      m.client = r.get<std::uint32_t>();
      m.step = r.get<std::uint64_t>();
      m.activation = get_tensor(r);
      const auto n = r.get<std::uint32_t>();
      if (std::size_t{n} * 4 > r.remaining()) throw DecodeError("activation: label count exceeds payload");
      if (m.activation.rank() == 0 || n != m.activation.batch()) {
        throw DecodeError("activation: " + std::to_string(n) + " labels for batch " +
                          std::to_string(m.activation.batch()));
      }
      m.labels.resize(n);
      for (auto& y : m.labels) {
        const auto v = r.get<std::uint32_t>();
        if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) throw DecodeError("activation: label out of range");
        y = static_cast<int>(v);
      }
      out = std::move(m);
      break;
    }
    case 4: {
      GradientMsg m;
      m.client = r.get<std::uint32_t>();
      m.step = r.get<std::uint64_t>();
      m.grad = get_tensor(r);
      out = std::move(m);
      break;
    }
    case 5: out = EndEpochMsg{r.get<std::uint32_t>()}; break;
    default: throw DecodeError("unknown message tag " + std::to_string(tag));
  }
  if (r.remaining() != 0) {
    throw DecodeError(std::to_string(r.remaining()) + " unconsumed payload bytes for tag " + std::to_string(tag));
  }
  return out;
}

std::vector<std::span<const std::uint8_t>> split_frames(std::span<const std::uint8_t> stream) {
  std::vector<std::span<const std::uint8_t>> frames;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    if (stream.size() - pos < kFrameHeaderBytes) throw DecodeError("stream ends inside a frame header");
    std::uint32_t len;
    std::memcpy(&len, stream.data() + pos, sizeof(len));
    const std::size_t total = kFrameHeaderBytes + len;
    if (stream.size() - pos < total) throw DecodeError("stream ends inside a frame payload");
    frames.push_back(stream.subspan(pos, total));
    pos += total;
  }
  return frames;
}

std::vector<Message> decode_stream(std::span<const std::uint8_t> stream) {
  std::vector<Message> out;
  for (auto f : split_frames(stream)) out.push_back(decode(f));
  return out;
}

}  // namespace sfl
