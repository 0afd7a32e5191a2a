#pragma once

// Header-line + little-endian float64 payload helpers shared by the pyramid
// and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "oskf/error.hpp"

namespace oskf::detail {

inline void write_f64_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

inline void read_f64_le(std::istream& in, std::span<double> values, const std::string& source) {
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw ParseError(source, 0, "payload truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

inline std::string read_header_line(std::istream& in, const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(source, 1, "missing JSON header line");
  return header;
}

inline void expect_eof(std::istream& in, const std::string& source) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(source, 0, "trailing bytes after payload");
  }
}

}  // namespace oskf::detail
