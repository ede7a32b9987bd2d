#pragma once

// Little-endian primitives shared by the on-disk containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylo::binio {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename U>
void write_le(std::ostream& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_le<std::uint8_t>(out, v); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
inline void write_i32(std::ostream& out, std::int32_t v) { write_le(out, static_cast<std::uint32_t>(v)); }
inline void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint8_t read_u8(std::istream& in) { return read_le<std::uint8_t>(in); }
inline std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
inline std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
inline std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_le<std::uint32_t>(in)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError("unexpected end of file");
  return s;
}

template <typename T>
void write_f32_array(std::ostream& out, std::span<const T> values) {
  for (T v : values) write_f32(out, static_cast<float>(v));
}

template <typename T>
void read_f32_array(std::istream& in, std::span<T> values) {
  for (T& v : values) v = static_cast<T>(read_f32(in));
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) throw FormatError("bad magic bytes");
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

}  // namespace stylo::binio
