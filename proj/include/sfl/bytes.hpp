#pragma once
// Little-endian byte buffers used by the checkpoint and wire formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sfl/error.hpp"

namespace sfl {

static_assert(std::endian::native == std::endian::little, "wire and file formats assume a little-endian host");

class ByteWriter {
 public:
  template <class U>
    requires std::is_arithmetic_v<U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }

  template <class U>
    requires std::is_arithmetic_v<U>
  void put_array(std::span<const U> vs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(vs.data());
    buf_.insert(buf_.end(), p, p + vs.size_bytes());
  }

  void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t>& bytes() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  template <class U>
    requires std::is_arithmetic_v<U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  template <class U>
    requires std::is_arithmetic_v<U>
  void get_array(std::span<U> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw DecodeError("truncated input: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                        ", have " + std::to_string(buf_.size() - pos_));
    }
  }

  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace sfl
