#pragma once

#include <cstring>
#include <stdexcept>
#include <string>

#include "tsbft/types.hpp"

namespace tsbft {

class MalformedMessage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian, length-prefixed, field-ordered binary writer.
class Writer {
 public:
  Writer() = default;
  explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }

  Writer& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  Writer& boolean(bool v) { return u8(v ? 1 : 0); }
  Writer& u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<Byte>(v >> (8 * i)));
    return *this;
  }
  Writer& u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<Byte>(v >> (8 * i)));
    return *this;
  }
  Writer& digest(const Digest& d) {
    buf_.insert(buf_.end(), d.begin(), d.end());
    return *this;
  }
  Writer& blob(BytesView b) {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }
  Writer& raw(BytesView b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }

  const Bytes& bytes() const& { return buf_; }
  Bytes&& bytes() && { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  Bytes buf_;
};

// Strict reader: every read is bounds-checked and throws MalformedMessage.
class Reader {
 public:
  explicit Reader(BytesView data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  bool boolean() {
    auto v = u8();
    if (v > 1) throw MalformedMessage("invalid boolean");
    return v == 1;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  Digest digest() {
    need(32);
    Digest d;
    std::memcpy(d.data(), data_.data() + pos_, 32);
    pos_ += 32;
    return d;
  }
  Bytes blob() {
    auto len = u32();
    need(len);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
              data_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return out;
  }
  // Element count for a list whose elements take at least `min_elem_size`
  // bytes; rejects counts the remaining input cannot hold.
  std::uint32_t count(std::size_t min_elem_size) {
    auto n = u32();
    if (min_elem_size > 0 && n > remaining() / min_elem_size) throw MalformedMessage("list length exceeds input");
    return n;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (pos_ != data_.size()) throw MalformedMessage("trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw MalformedMessage("truncated input");
  }

  BytesView data_;
  std::size_t pos_ = 0;
};

}  // namespace tsbft
