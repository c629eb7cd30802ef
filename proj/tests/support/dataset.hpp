// SPDX-License-Identifier: Apache-2.0
#pragma once

// Writes synthetic scans, pseudo-labels and object pools to disk in the
// on-disk formats the commands consume.

#include <filesystem>
#include <string>

#include "pcaug/io.hpp"
#include "support/synthetic.hpp"

namespace pcaug::synth {

namespace fs = std::filesystem;

inline fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pcaug_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string scan_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// `count` scenes as <dir>/scans/NNNNNN.bin and <dir>/labels/NNNNNN.label.
inline void write_scenes(const fs::path& dir, std::size_t count, const SceneParams& sp, std::uint64_t seed) {
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "labels");
  for (std::size_t i = 0; i < count; ++i) {
    const auto scene = make_scene(sp, seed + i);
    io::save_scan(scene.cloud, dir / "scans" / (scan_name(i) + ".bin"));
    io::save_labels(scene.labels, dir / "labels" / (scan_name(i) + ".label"));
  }
}

inline std::string read_text(const fs::path& p) {
  const auto raw = io::read_file(p);
  return {raw.begin(), raw.end()};
}

}  // namespace pcaug::synth
