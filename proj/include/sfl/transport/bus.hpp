#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "sfl/transport/message.hpp"

namespace sfl {

class TransportError : public Error {
 public:
  using Error::Error;
};

// Carries one encoded frame from sender to receiver and returns the bytes as
// read at the receiving end.
class Link {
 public:
  virtual ~Link() = default;
  virtual std::vector<std::uint8_t> carry(std::span<const std::uint8_t> frame) = 0;
};

// In-process delivery: the receiver sees a copy of the sender's bytes.
class LoopbackLink final : public Link {
 public:
  std::vector<std::uint8_t> carry(std::span<const std::uint8_t> frame) override {
    return {frame.begin(), frame.end()};
  }
};

// Stream transport over a connected socket pair. A writer thread pushes
// frames into one end while the caller reads whole frames from the other, so
// frames larger than the socket buffer cannot deadlock. A read that sees no
// progress for `timeout` raises TransportError.
class SocketLink final : public Link {
 public:
  explicit SocketLink(std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~SocketLink() override;
  SocketLink(const SocketLink&) = delete;
  SocketLink& operator=(const SocketLink&) = delete;

  std::vector<std::uint8_t> carry(std::span<const std::uint8_t> frame) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Ordered message bus. Every message is encoded, carried over the link,
// optionally appended to the transcript, and decoded at the receiver.
// deliver_phase() delivers a phase's messages in ascending sender id,
// independent of the order in which senders produced them.
class Bus {
 public:
  explicit Bus(std::unique_ptr<Link> link = std::make_unique<LoopbackLink>(), bool record = false);

  Message send(const Message& m);

  std::vector<Message> deliver_phase(std::vector<std::pair<std::uint32_t, Message>> posted);

  bool recording() const { return record_; }
  const std::vector<std::uint8_t>& transcript() const { return transcript_; }
  std::vector<std::uint8_t> take_transcript() { return std::move(transcript_); }
  std::uint64_t frames_sent() const { return frames_; }

 private:
  std::unique_ptr<Link> link_;
  bool record_;
  std::vector<std::uint8_t> transcript_;
  std::uint64_t frames_ = 0;
};

}  // namespace sfl
