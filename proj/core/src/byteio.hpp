// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitives for the binary file formats. Byte order is fixed
// in the formats, so reads and writes go through explicit byte shuffles
// instead of raw struct dumps.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ltk/error.hpp"

namespace ltk::byteio {

inline void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_i32(std::ostream& os, std::int32_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
}

inline void write_i64(std::ostream& os, std::int64_t v) {
  write_u64(os, static_cast<std::uint64_t>(v));
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  write_u64(os, u);
}

inline void read_exact(std::istream& is, unsigned char* buf, std::size_t n, const char* what) {
  if (!is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
    raise(ErrorCategory::parse, std::string(what) + " truncated");
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  read_exact(is, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  read_exact(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::int32_t read_i32(std::istream& is, const char* what) {
  return static_cast<std::int32_t>(read_u32(is, what));
}

inline std::int64_t read_i64(std::istream& is, const char* what) {
  return static_cast<std::int64_t>(read_u64(is, what));
}

inline float read_f32(std::istream& is, const char* what) {
  std::uint32_t u = read_u32(is, what);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline double read_f64(std::istream& is, const char* what) {
  std::uint64_t u = read_u64(is, what);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

// Length-prefixed string, u16 length.
inline void write_string(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff)
    raise(ErrorCategory::usage, "string too long for length-prefixed field");
  write_u16(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
  std::uint16_t n = read_u16(is, what);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n))
    raise(ErrorCategory::parse, std::string(what) + " truncated");
  return s;
}

}  // namespace ltk::byteio
