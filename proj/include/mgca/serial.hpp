#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "mgca/errors.hpp"

// Little-endian byte serialization used by the binary file formats.
// Always byte-explicit so files are identical across platforms.

namespace mgca::serial {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : p_(data), n_(size) {}
  explicit ByteReader(const std::string& buf) : ByteReader(buf.data(), buf.size()) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p_[off_ + i])) << (8 * i);
    off_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    std::uint32_t len = u32();
    need(len);
    std::string s(p_ + off_, len);
    off_ += len;
    return s;
  }

  std::string raw(std::size_t len) {
    need(len);
    std::string s(p_ + off_, len);
    off_ += len;
    return s;
  }

  bool exhausted() const { return off_ == n_; }

 private:
  void need(std::size_t k) const {
    if (off_ + k > n_) throw IoError("truncated binary payload");
  }
  const char* p_;
  std::size_t n_;
  std::size_t off_ = 0;
};

// FNV-1a over a canonical string; used for config digests.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mgca::serial
