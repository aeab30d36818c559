/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pissm {

struct SerializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// CRC-32 (IEEE 802.3 polynomial, zlib-compatible).
inline std::uint32_t crc32(std::span<const unsigned char> data,
                           std::uint32_t seed = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xffffffffu;
  for (unsigned char b : data) c = table[(c ^ b) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

/// Little-endian append-only byte sink.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  void put_bytes(std::span<const unsigned char> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  /// Appends crc32 of everything written so far.
  void put_crc_trailer() { put_u32(crc32(buf_)); }

  const std::vector<unsigned char>& bytes() const { return buf_; }
  std::vector<unsigned char> take() { return std::move(buf_); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i)
      buf_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
  }

  std::vector<unsigned char> buf_;
};

/// Bounds-checked little-endian reader over a borrowed buffer.
class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

  std::uint8_t get_u8() { return get_le<std::uint8_t>(); }
  std::uint16_t get_u16() { return get_le<std::uint16_t>(); }
  std::uint32_t get_u32() { return get_le<std::uint32_t>(); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>(); }
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::string get_string() {
    const std::uint32_t n = get_u32();
    require(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  /// Verifies the trailing crc32 over all bytes before it.
  void check_crc_trailer() {
    if (data_.size() < 4) throw SerializationError("buffer too short for checksum");
    const std::uint32_t stored =
        static_cast<std::uint32_t>(data_[data_.size() - 4]) |
        static_cast<std::uint32_t>(data_[data_.size() - 3]) << 8 |
        static_cast<std::uint32_t>(data_[data_.size() - 2]) << 16 |
        static_cast<std::uint32_t>(data_[data_.size() - 1]) << 24;
    if (crc32(data_.first(data_.size() - 4)) != stored)
      throw SerializationError("checksum mismatch");
  }

 private:
  template <typename U>
  U get_le() {
    std::make_unsigned_t<U> v = 0;
    require(sizeof(U));
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::make_unsigned_t<U>>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  void require(std::size_t n) {
    if (pos_ + n > data_.size()) throw SerializationError("unexpected end of buffer");
  }

  std::span<const unsigned char> data_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path,
                             std::span<const unsigned char> data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw SerializationError("cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size()));
  if (!f) throw SerializationError("short write: " + path);
}

}  // namespace pissm
