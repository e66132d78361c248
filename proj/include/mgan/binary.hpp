#pragma once

#include "mgan/error.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string_view>

// Little-endian primitives shared by the checkpoint and dataset formats.
namespace mgan::binary {

inline void put_u32(std::ostream& out, std::uint32_t v)
{
  char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v)
{
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_magic(std::ostream& out, std::string_view magic)
{
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline std::uint64_t get_bytes(std::istream& in, int count)
{
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), count);
  if (in.gcount() != count)
    fail(ErrorKind::io, "truncated binary record");
  std::uint64_t v = 0;
  for (int i = count - 1; i >= 0; --i)
    v = (v << 8) | b[i];
  return v;
}

inline std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
inline std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void expect_magic(std::istream& in, std::string_view magic)
{
  char b[8] = {};
  in.read(b, static_cast<std::streamsize>(magic.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) ||
      std::string_view(b, magic.size()) != magic)
    fail(ErrorKind::io, "bad magic bytes, expected '" + std::string(magic) + "'");
}

} // namespace mgan::binary
