#pragma once

// Little-endian byte buffer serialization shared by the key and checkpoint
// file formats, plus whole-file read/write helpers.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cyphertalk/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace cyphertalk {

using Bytes = std::vector<uint8_t>;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }

  void f64_vec(const std::vector<double>& v) {
    u32(static_cast<uint32_t>(v.size()));
    raw(v.data(), v.size() * 8);
  }

  void u32_vec(const std::vector<uint32_t>& v) {
    u32(static_cast<uint32_t>(v.size()));
    raw(v.data(), v.size() * 4);
  }

  void magic(const char tag[4]) { raw(tag, 4); }

  void crc_trailer() {
    uint32_t crc = ::crc32(0, buf_.data(), static_cast<uInt>(buf_.size()));
    u32(crc);
  }

  const Bytes& bytes() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const Bytes& b) : buf_(b), limit_(b.size()) {}

  uint8_t u8() { return read<uint8_t>(); }
  uint16_t u16() { return read<uint16_t>(); }
  uint32_t u32() { return read<uint32_t>(); }
  uint64_t u64() { return read<uint64_t>(); }
  double f64() { return read<double>(); }

  std::vector<double> f64_vec() {
    const uint32_t n = u32();
    std::vector<double> v(n);
    raw(v.data(), size_t(n) * 8);
    return v;
  }

  std::vector<uint32_t> u32_vec() {
    const uint32_t n = u32();
    std::vector<uint32_t> v(n);
    raw(v.data(), size_t(n) * 4);
    return v;
  }

  void expect_magic(const char tag[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0)
      throw FormatError(FormatError::Kind::BadMagic, "bad magic");
  }

  // Checks the trailing CRC32 against everything before it. Call before
  // parsing; parsing then proceeds over verified bytes.
  void verify_crc_trailer() {
    if (buf_.size() < 4)
      throw FormatError(FormatError::Kind::Truncated, "file shorter than CRC trailer");
    uint32_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
    uint32_t actual =
        ::crc32(0, buf_.data(), static_cast<uInt>(buf_.size() - 4));
    if (stored != actual)
      throw FormatError(FormatError::Kind::BadChecksum, "CRC mismatch");
    limit_ = buf_.size() - 4;
  }

  size_t remaining() const { return limit_ - pos_; }

 private:
  template <typename T>
  T read() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* p, size_t n) {
    if (pos_ + n > limit_)
      throw FormatError(FormatError::Kind::Truncated, "truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }

  const Bytes& buf_;
  size_t pos_ = 0;
  size_t limit_;
};

inline void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path);
}

inline Bytes read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error("cannot open: " + path);
  const auto n = f.tellg();
  f.seekg(0);
  Bytes b(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(b.data()), n);
  if (!f) throw Error("read failed: " + path);
  return b;
}

inline uint32_t crc32_of(const Bytes& b) {
  return ::crc32(0, b.data(), static_cast<uInt>(b.size()));
}

}  // namespace cyphertalk
