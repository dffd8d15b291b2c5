#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "fastbev/detail/bytes.hpp"
#include "fastbev/error.hpp"

namespace fastbev {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// In-memory form of a TensorFile: "FBTN", u32 version, u32 rank,
/// u32 dims[rank], f32 payload; little-endian, row-major.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

inline std::uint64_t checked_element_count(std::span<const std::uint32_t> dims) {
  if (dims.empty()) throw DecodeError(DecodeError::Kind::rank_zero);
  std::uint64_t n = 1;
  for (std::uint32_t d : dims) {
    n *= d;
    if (n > (std::uint64_t{1} << 31)) throw DecodeError(DecodeError::Kind::dims_overflow);
  }
  return n;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims,
                                               std::span<const float> data) {
  const std::uint64_t n = detail::checked_element_count(dims);
  if (n != data.size()) {
    throw ContractError("tensor dims product " + std::to_string(n) + " does not match " +
                        std::to_string(data.size()) + " values");
  }
  detail::ByteWriter w;
  w.reserve(12 + dims.size() * 4 + data.size() * 4);
  w.magic("FBTN");
  w.u32(kTensorFormatVersion);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) w.u32(d);
  for (float f : data) w.f32(f);
  return std::move(w).take();
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic_matches("FBTN")) throw DecodeError(DecodeError::Kind::bad_magic);
  const std::uint32_t version = r.u32();
  if (version != kTensorFormatVersion) {
    throw DecodeError(DecodeError::Kind::version_mismatch, "got " + std::to_string(version));
  }
  const std::uint32_t rank = r.u32();
  if (rank == 0) throw DecodeError(DecodeError::Kind::rank_zero);
  // Bound the rank by the stream length before allocating.
  r.need(static_cast<std::size_t>(rank) * 4);
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) d = r.u32();
  const std::uint64_t n = detail::checked_element_count(t.dims);
  r.need(static_cast<std::size_t>(n) * 4);
  t.data.resize(static_cast<std::size_t>(n));
  for (float& f : t.data) f = r.f32();
  if (r.remaining() != 0) throw DecodeError(DecodeError::Kind::trailing_bytes);
  return t;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                         std::span<const float> data) {
  write_file_bytes(path, encode_tensor(dims, data));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path));
}

}  // namespace fastbev
