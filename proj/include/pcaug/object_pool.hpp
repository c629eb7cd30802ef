// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pcaug/dbscan.hpp"
#include "pcaug/io.hpp"
#include "pcaug/point_cloud.hpp"
#include "pcaug/random.hpp"

namespace pcaug {

/// One clustered object in the frame of the scan it was captured in.
struct ObjectInstance {
  PointCloud points;
  std::uint32_t class_id = 0;
  std::string source_id;
  std::uint32_t source_index = 0;  // position among instances of the same source
  Vec3 bbox_center = Vec3::Zero();
  Vec3 bbox_extent = Vec3::Zero();

  void refresh_bbox() {
    const Box b = bounding_box(points);
    bbox_center = b.center;
    bbox_extent = b.extent;
  }
};

struct ObjectPool {
  std::vector<ObjectInstance> instances;
  std::size_t per_class_cap = 1000;

  std::map<std::uint32_t, std::size_t> class_counts() const {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& inst : instances) ++counts[inst.class_id];
    return counts;
  }

  /// Sorts into manifest order: (class, source, index).
  void canonicalize() {
    std::stable_sort(instances.begin(), instances.end(), [](const auto& a, const auto& b) {
      return std::tie(a.class_id, a.source_id, a.source_index) <
             std::tie(b.class_id, b.source_id, b.source_index);
    });
  }

  /// Keeps the first per_class_cap instances of each class in current order.
  void enforce_cap() {
    std::map<std::uint32_t, std::size_t> seen;
    std::erase_if(instances, [&](const ObjectInstance& inst) {
      return ++seen[inst.class_id] > per_class_cap;
    });
  }
};

struct ExtractionParams {
  DbscanParams dbscan;
  std::size_t min_instance_points = 10;
};

/// Clusters the points of each class of interest and returns every cluster
/// with at least min_instance_points points, ordered by class then cluster id.
inline std::vector<ObjectInstance> extract_instances(const PointCloud& scan, const LabelArray& labels,
                                                     const std::set<std::uint32_t>& classes_of_interest,
                                                     const ExtractionParams& params,
                                                     const std::string& source_id = {}) {
  io::check_paired(scan, labels, "extract_instances");
  params.dbscan.validate();
  std::vector<ObjectInstance> out;
  std::uint32_t next_index = 0;
  for (auto cls : classes_of_interest) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < scan.size(); ++i)
      if (labels.labels[i] == cls) members.push_back(i);
    if (members.empty()) continue;
    const PointCloud sub = scan.select(members);
    const auto ids = dbscan_cluster(sub, params.dbscan);
    const int n_clusters = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(n_clusters));
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != kNoise) groups[ids[i]].push_back(i);
    for (const auto& g : groups) {
      if (g.size() < params.min_instance_points) continue;
      ObjectInstance inst;
      inst.points = sub.select(g);
      inst.class_id = cls;
      inst.source_id = source_id;
      inst.source_index = next_index++;
      inst.refresh_bbox();
      out.push_back(std::move(inst));
    }
  }
  return out;
}

namespace detail {

/// Shortest text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string instance_file_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.bin", id);
  return buf;
}

template <typename T>
T parse_number(const std::string& s, const std::string& context) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    try {
      v = static_cast<T>(std::stod(s, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) fail(ErrorKind::kValidation, context + ": bad number '" + s + "'");
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      fail(ErrorKind::kValidation, context + ": bad integer '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Writes `manifest.txt` plus `instances/<id>.bin` under `dir`, in manifest order.
/// Replaces any previous pool stored there.
inline void pool_save(const ObjectPool& pool, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ObjectPool sorted = pool;
  sorted.canonicalize();
  std::error_code ec;
  fs::create_directories(dir / "instances", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + (dir / "instances").string());
  for (const auto& entry : fs::directory_iterator(dir / "instances"))
    if (entry.path().extension() == ".bin") fs::remove(entry.path());

  std::ostringstream manifest;
  manifest << "# pcaug object pool v1\n";
  manifest << "# per_class_cap\t" << pool.per_class_cap << "\n";
  manifest << "# id\tclass\tsource\tindex\tpoints\tcx\tcy\tcz\tex\tey\tez\n";
  for (std::size_t id = 0; id < sorted.instances.size(); ++id) {
    const auto& inst = sorted.instances[id];
    require(inst.source_id.find_first_of("\t\n\r") == std::string::npos,
            "pool_save: source id contains a tab or newline");
    const auto file = detail::instance_file_name(id);
    io::save_scan(inst.points, dir / "instances" / file);
    manifest << file.substr(0, file.size() - 4) << '\t' << inst.class_id << '\t'
             << (inst.source_id.empty() ? "-" : inst.source_id) << '\t' << inst.source_index << '\t'
             << inst.points.size();
    for (int a = 0; a < 3; ++a) manifest << '\t' << detail::format_double(inst.bbox_center[a]);
    for (int a = 0; a < 3; ++a) manifest << '\t' << detail::format_double(inst.bbox_extent[a]);
    manifest << '\n';
  }
  const auto text = manifest.str();
  io::write_file(dir / "manifest.txt", text.data(), text.size());
}

/// Reads a pool written by pool_save. The per-class cap (from the manifest
/// unless overridden) is enforced by truncation in manifest order.
inline ObjectPool pool_load(const std::filesystem::path& dir,
                            std::optional<std::size_t> cap_override = std::nullopt) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + manifest_path.string());
  ObjectPool pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string ctx = manifest_path.string() + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (line[0] == '#') {
      if (fields.size() == 2 && fields[0] == "# per_class_cap")
        pool.per_class_cap = detail::parse_number<std::size_t>(fields[1], ctx);
      continue;
    }
    if (fields.size() != 11) fail(ErrorKind::kValidation, ctx + ": expected 11 fields");
    ObjectInstance inst;
    inst.class_id = detail::parse_number<std::uint32_t>(fields[1], ctx);
    inst.source_id = fields[2] == "-" ? std::string{} : fields[2];
    inst.source_index = detail::parse_number<std::uint32_t>(fields[3], ctx);
    const auto count = detail::parse_number<std::size_t>(fields[4], ctx);
    for (int a = 0; a < 3; ++a) {
      inst.bbox_center[a] = detail::parse_number<double>(fields[5 + a], ctx);
      inst.bbox_extent[a] = detail::parse_number<double>(fields[8 + a], ctx);
    }
    const auto file = dir / "instances" / (fields[0] + ".bin");
    if (!std::filesystem::exists(file)) fail(ErrorKind::kIo, ctx + ": missing instance file " + file.string());
    inst.points = io::load_scan(file);
    if (inst.points.size() != count)
      fail(ErrorKind::kValidation, ctx + ": point count does not match " + file.string());
    pool.instances.push_back(std::move(inst));
  }
  if (cap_override) pool.per_class_cap = *cap_override;
  require(pool.per_class_cap >= 1, "pool: per_class_cap must be >= 1");
  pool.enforce_cap();
  return pool;
}

/// Indices of n instances drawn uniformly; without replacement when
/// n <= pool size, with replacement otherwise.
inline std::vector<std::size_t> pool_sample_indices(std::size_t pool_size, std::size_t n, std::uint64_t seed) {
  if (pool_size == 0) fail(ErrorKind::kInvalidArgument, "pool_sample: empty pool");
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(n);
  if (n <= pool_size) {
    std::vector<std::size_t> idx(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + uniform_index(rng, pool_size - i);
      std::swap(idx[i], idx[j]);
      out.push_back(idx[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.push_back(uniform_index(rng, pool_size));
  }
  return out;
}

inline std::vector<ObjectInstance> pool_sample(const ObjectPool& pool, std::size_t n, std::uint64_t seed) {
  std::vector<ObjectInstance> out;
  for (auto i : pool_sample_indices(pool.instances.size(), n, seed)) out.push_back(pool.instances[i]);
  return out;
}

}  // namespace pcaug
