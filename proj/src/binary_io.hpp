#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "foveate/error.hpp"

// Little-endian primitives shared by the binary file formats.
namespace foveate::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float v) {
  auto bits = to_little(std::bit_cast<std::uint32_t>(v));
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw IoError(std::string("truncated file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v;
  read_exact(in, &v, sizeof v, "u32");
  return to_little(v);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v;
  read_exact(in, &v, sizeof v, "u64");
  return to_little(v);
}

inline float read_f32(std::istream& in) {
  std::uint32_t bits;
  read_exact(in, &bits, sizeof bits, "f32");
  return std::bit_cast<float>(to_little(bits));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), "magic");
  if (got != magic) throw IoError("bad magic: expected " + std::string(magic));
}

}  // namespace foveate::detail
