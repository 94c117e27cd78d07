#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace rollcast {

/// Raised on malformed or truncated binary files.
struct FileFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Little-endian primitives, written byte by byte so the format is
// host-order independent.

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FileFormatError(std::string("truncated file while reading ") + what);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw FileFormatError(std::string("truncated file while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read_u64(is, what));
}

inline void check_magic(std::istream& is, const char* expected) {
  char got[5] = {0, 0, 0, 0, 0};
  if (!is.read(got, 4)) {
    throw FileFormatError(std::string("truncated file while reading magic; expected \"") +
                          expected + "\"");
  }
  if (std::string(got, 4) != expected) {
    throw FileFormatError(std::string("bad magic \"") + std::string(got, 4) +
                          "\"; expected \"" + expected + "\"");
  }
}

}  // namespace rollcast
