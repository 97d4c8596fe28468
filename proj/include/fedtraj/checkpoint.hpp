#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedtraj/diff.hpp"
#include "fedtraj/errors.hpp"

namespace fedtraj {

// Checkpoint layout, all little-endian:
//   "FTCK" | u32 version | u32 n_segments
//   per segment: u32 name_len | name bytes | u32 rows | u32 cols
//   u64 scalar_count | scalar_count * f32
inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, errc::truncated_file, "checkpoint ends mid-field");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const parameter_vector<S>& pv, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), errc::io_error, "cannot write checkpoint " + path);
  out.write("FTCK", 4);
  detail::put_u32(out, checkpoint_version);
  detail::put_u32(out, static_cast<std::uint32_t>(pv.layout.size()));
  for (const auto& seg : pv.layout) {
    detail::put_u32(out, static_cast<std::uint32_t>(seg.name.size()));
    out.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(seg.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(seg.cols));
  }
  detail::put_u64(out, pv.values.size());
  for (const S v : pv.values) detail::put_f32(out, static_cast<float>(v));
  require(out.good(), errc::io_error, "write failed for checkpoint " + path);
}

template <typename S = float>
parameter_vector<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::io_error, "cannot open checkpoint " + path);
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "FTCK", 4) == 0,
          errc::checkpoint_corrupt, "not a checkpoint file: " + path);
  const std::uint32_t version = detail::get_u32(in);
  require(version == checkpoint_version, errc::version_mismatch,
          "checkpoint version " + std::to_string(version) + ", expected " +
              std::to_string(checkpoint_version));
  parameter_vector<S> pv;
  const std::uint32_t nseg = detail::get_u32(in);
  std::int64_t expected = 0;
  for (std::uint32_t i = 0; i < nseg; ++i) {
    layout_segment seg;
    const std::uint32_t len = detail::get_u32(in);
    seg.name.resize(len);
    in.read(seg.name.data(), len);
    require(in.gcount() == static_cast<std::streamsize>(len), errc::truncated_file,
            "checkpoint ends inside a segment name");
    seg.rows = detail::get_u32(in);
    seg.cols = detail::get_u32(in);
    expected += seg.size();
    pv.layout.push_back(std::move(seg));
  }
  const std::uint64_t count = detail::get_u64(in);
  require(static_cast<std::int64_t>(count) == expected, errc::checkpoint_corrupt,
          "scalar count disagrees with the layout descriptor");
  pv.values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i)
    pv.values.push_back(static_cast<S>(detail::get_f32(in)));
  return pv;
}

}  // namespace fedtraj
