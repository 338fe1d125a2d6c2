#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cmxqe/error.hpp"

namespace cmxqe::io {

/// Whole file as bytes; UnreadableFile if it cannot be opened or read.
std::string read_file(const std::filesystem::path& path);

/// Replaces the file contents; IoError on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Little-endian encoder for the binary container formats.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view bytes) { buffer_.append(bytes); }

  const std::string& bytes() const { return buffer_; }
  std::string take() { return std::move(buffer_); }
  void reserve(std::size_t n) { buffer_.reserve(n); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  std::string buffer_;
};

/// Little-endian decoder; every read past the end throws TruncatedFile.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  double get_f64() { return std::bit_cast<double>(get_u64()); }

  std::string_view get_bytes(std::size_t n) {
    require(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorKind::TruncatedFile, "needed " + std::to_string(n) + " bytes at offset " +
                                                std::to_string(pos_) + ", " +
                                                std::to_string(remaining()) + " left");
    }
  }

  std::uint64_t get_le(int width) {
    require(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace cmxqe::io
