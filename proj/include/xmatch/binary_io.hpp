#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "xmatch/error.hpp"

namespace xmatch {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    const auto* raw = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }

  void u8(std::uint8_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }

  // Optional JSON provenance block: u32 length followed by UTF-8 bytes.
  void trailer(const std::string& json) {
    u32(static_cast<std::uint32_t>(json.size()));
    bytes_.insert(bytes_.end(), json.begin(), json.end());
  }

  const std::vector<char>& bytes() const { return bytes_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<char> bytes_;
};

/// Bounds-checked little-endian reader; truncation raises ParseError.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string source = {})
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  static ByteReader from_file(const std::string& path);

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::string_view(bytes_.data() + pos_, tag.size()) != tag) {
      throw Error(ErrorKind::ParseError, source_ + ": bad magic, expected " + std::string(tag));
    }
    pos_ += tag.size();
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  bool at_end() const { return pos_ == bytes_.size(); }

  // Reads the optional JSON trailer; empty when the stream has ended.
  std::string trailer();

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::ParseError, source_ + ": truncated file");
  }

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::string& path);

}  // namespace xmatch
