#pragma once

// Little-endian primitive encoding shared by the set and parameter formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "error.hpp"

namespace vpfa::binary {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename T>
  void uint(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<unsigned char>(value >> (8 * i)));
    }
  }
  void f64(double value) { uint(std::bit_cast<std::uint64_t>(value)); }

  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::string origin)
      : buf_(buf), origin_(std::move(origin)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(buf_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      fail(ErrorCode::Format, origin_ + ": truncated file at offset " +
                                  std::to_string(pos_) + " (need " +
                                  std::to_string(n) + " more bytes)");
    }
  }

  const std::vector<unsigned char>& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& data);

}  // namespace vpfa::binary
