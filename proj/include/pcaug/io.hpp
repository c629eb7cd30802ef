// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary file formats:
//   scan   : float32 LE x,y,z,intensity per point (16 bytes/point)
//   labels : uint32 LE per point, class id = value & 0xFFFF
//   bytes  : one 0x00/0x01 byte per point (ground labels, inserted masks)
//   tensor : 16-byte header {magic "PCT1", dtype, rank, reserved} as uint32 LE,
//            rank uint32 LE dims, then row-major data (float32 or uint16)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pcaug/point_cloud.hpp"

namespace pcaug::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read error on " + path.string());
  return buf;
}

inline void write_file(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) fail(ErrorKind::kIo, "write error on " + path.string());
}

template <typename T>
std::vector<T> decode_array(const std::vector<char>& buf, std::size_t offset = 0) {
  std::vector<T> out((buf.size() - offset) / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), buf.data() + offset, out.size() * sizeof(T));
  return out;
}

// ---- scans ----------------------------------------------------------------

inline PointCloud decode_scan(const std::vector<char>& buf, const std::string& name = "scan") {
  if (buf.size() % 16 != 0)
    fail(ErrorKind::kValidation, name + ": size " + std::to_string(buf.size()) +
                                     " is not a multiple of 16 bytes");
  const auto raw = decode_array<float>(buf);
  PointCloud cloud;
  const std::size_t n = raw.size() / 4;
  cloud.points.reserve(n);
  cloud.intensity.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.emplace_back(raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]);
    cloud.intensity.push_back(raw[4 * i + 3]);
  }
  for (const auto& p : cloud.points)
    if (!p.allFinite()) fail(ErrorKind::kValidation, name + ": non-finite coordinate");
  return cloud;
}

inline PointCloud load_scan(const fs::path& path) { return decode_scan(read_file(path), path.string()); }

inline std::vector<float> encode_scan(const PointCloud& cloud) {
  cloud.validate();
  std::vector<float> raw;
  raw.reserve(cloud.size() * 4);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    raw.push_back(static_cast<float>(p.x()));
    raw.push_back(static_cast<float>(p.y()));
    raw.push_back(static_cast<float>(p.z()));
    raw.push_back(cloud.has_intensity() ? cloud.intensity[i] : 0.0f);
  }
  return raw;
}

inline void save_scan(const PointCloud& cloud, const fs::path& path) {
  const auto raw = encode_scan(cloud);
  write_file(path, raw.data(), raw.size() * sizeof(float));
}

// ---- labels ---------------------------------------------------------------

inline constexpr std::uint32_t kClassMask = 0xFFFF;

inline LabelArray load_labels(const fs::path& path, std::uint32_t num_classes) {
  const auto buf = read_file(path);
  if (buf.size() % 4 != 0)
    fail(ErrorKind::kValidation, path.string() + ": size is not a multiple of 4 bytes");
  LabelArray out;
  out.num_classes = num_classes;
  out.labels = decode_array<std::uint32_t>(buf);
  for (auto& l : out.labels) l &= kClassMask;
  for (auto l : out.labels)
    if (l >= num_classes && l != kIgnoreLabel)
      fail(ErrorKind::kValidation, path.string() + ": class id " + std::to_string(l) +
                                       " exceeds num_classes " + std::to_string(num_classes));
  return out;
}

inline void save_labels(const LabelArray& labels, const fs::path& path) {
  write_file(path, labels.labels.data(), labels.labels.size() * sizeof(std::uint32_t));
}

/// Label count must match the scan it annotates.
inline void check_paired(const PointCloud& scan, const LabelArray& labels, const std::string& what) {
  if (scan.size() != labels.size())
    fail(ErrorKind::kValidation, what + ": " + std::to_string(labels.size()) + " labels for " +
                                     std::to_string(scan.size()) + " points");
}

// ---- per-point byte flags -------------------------------------------------

inline std::vector<bool> load_flags(const fs::path& path, std::size_t expected_count) {
  const auto buf = read_file(path);
  if (buf.size() != expected_count)
    fail(ErrorKind::kValidation, path.string() + ": " + std::to_string(buf.size()) +
                                     " flags for " + std::to_string(expected_count) + " points");
  std::vector<bool> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (buf[i] != 0 && buf[i] != 1)
      fail(ErrorKind::kValidation, path.string() + ": flag byte is neither 0 nor 1");
    out[i] = buf[i] == 1;
  }
  return out;
}

inline void save_flags(const std::vector<bool>& flags, const fs::path& path) {
  std::vector<std::uint8_t> raw(flags.begin(), flags.end());
  write_file(path, raw.data(), raw.size());
}

// ---- tensors --------------------------------------------------------------

inline constexpr std::uint32_t kTensorMagic = 0x31544350;  // "PCT1"

enum class DType : std::uint32_t { kFloat32 = 1, kUInt16 = 2 };

template <typename T>
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<T> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::kFloat32;
  else {
    static_assert(std::is_same_v<T, std::uint16_t>, "unsupported tensor element type");
    return DType::kUInt16;
  }
}

template <typename T>
void save_tensor(const Tensor<T>& t, const fs::path& path) {
  require(t.element_count() == t.data.size(), "tensor: dims do not match data size");
  std::vector<char> buf;
  auto put32 = [&buf](std::uint32_t v) {
    const auto bytes = std::bit_cast<std::array<char, 4>>(v);
    buf.insert(buf.end(), bytes.begin(), bytes.end());
  };
  put32(kTensorMagic);
  put32(static_cast<std::uint32_t>(dtype_of<T>()));
  put32(static_cast<std::uint32_t>(t.dims.size()));
  put32(0);
  for (auto d : t.dims) put32(d);
  const auto* bytes = reinterpret_cast<const char*>(t.data.data());
  buf.insert(buf.end(), bytes, bytes + t.data.size() * sizeof(T));
  write_file(path, buf.data(), buf.size());
}

template <typename T>
Tensor<T> load_tensor(const fs::path& path) {
  const auto buf = read_file(path);
  const auto name = path.string();
  if (buf.size() < 16) fail(ErrorKind::kValidation, name + ": truncated tensor header");
  std::uint32_t header[4];
  std::memcpy(header, buf.data(), 16);
  if (header[0] != kTensorMagic) fail(ErrorKind::kValidation, name + ": bad tensor magic");
  if (header[1] != static_cast<std::uint32_t>(dtype_of<T>()))
    fail(ErrorKind::kValidation, name + ": unexpected tensor dtype " + std::to_string(header[1]));
  const std::size_t rank = header[2];
  if (buf.size() < 16 + 4 * rank) fail(ErrorKind::kValidation, name + ": truncated tensor dims");
  Tensor<T> t;
  t.dims.resize(rank);
  if (rank > 0) std::memcpy(t.dims.data(), buf.data() + 16, 4 * rank);
  const std::size_t offset = 16 + 4 * rank;
  if (buf.size() - offset != t.element_count() * sizeof(T))
    fail(ErrorKind::kValidation, name + ": tensor payload does not match dims");
  t.data = decode_array<T>(buf, offset);
  return t;
}

// ---- images ---------------------------------------------------------------

/// Binary portable graymap (P5), 8-bit.
inline void save_pgm(const std::vector<std::uint8_t>& pixels, int width, int height,
                     const fs::path& path) {
  require(pixels.size() == static_cast<std::size_t>(width) * height, "pgm: size mismatch");
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<char> buf(header.begin(), header.end());
  buf.insert(buf.end(), pixels.begin(), pixels.end());
  write_file(path, buf.data(), buf.size());
}

}  // namespace pcaug::io
