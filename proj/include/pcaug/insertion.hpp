// SPDX-License-Identifier: Apache-2.0
#pragma once

// Valid ground-based insertion: overlap checking against the scan's voxel
// occupancy, ground filtering, placement that keeps the object's viewing
// orientation, altitude refinement, and range-view style translation.

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcaug/ground.hpp"
#include "pcaug/object_pool.hpp"
#include "pcaug/point_cloud.hpp"
#include "pcaug/random.hpp"
#include "pcaug/range_view.hpp"
#include "pcaug/voxel_grid.hpp"

namespace pcaug {

struct QueryExtent {
  Vec3 extent = Vec3::Zero();
  Index3 voxel_dims{1, 1, 1};
};

/// Candidate object centers as voxel indices of the scan grid.
struct ValidLocationSet {
  std::vector<Index3> locations;  // sorted
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;

  std::size_t size() const { return locations.size(); }
  bool empty() const { return locations.empty(); }

  Vec3 center_of(const Index3& v) const {
    return origin + voxel_size * Vec3(v.x + 0.5, v.y + 0.5, v.z + 0.5);
  }
};

struct InsertionPlacement {
  Vec3 object_center = Vec3::Zero();  // o_q
  Vec3 target_center = Vec3::Zero();  // o_c
  double azimuth_object = 0.0;
  double azimuth_target = 0.0;
  double radius_object = 0.0;
  double radius_target = 0.0;
  Eigen::Matrix4d translation = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d rotation = Eigen::Matrix4d::Identity();

  Eigen::Matrix4d transform() const { return rotation * translation; }
};

/// Bounding extent of all sampled instances and its size in voxels.
inline QueryExtent compute_query_extent(std::span<const ObjectInstance> instances, double voxel_size) {
  require(!instances.empty(), "compute_query_extent: no instances");
  require(voxel_size > 0.0, "compute_query_extent: voxel_size must be > 0");
  std::vector<PointCloud> clouds;
  clouds.reserve(instances.size());
  for (const auto& inst : instances) clouds.push_back(inst.points);
  QueryExtent q;
  q.extent = bounding_extent(clouds);
  q.voxel_dims = {voxel_count(q.extent.x(), voxel_size), voxel_count(q.extent.y(), voxel_size),
                  voxel_count(q.extent.z(), voxel_size)};
  return q;
}

/// Center voxel of the window whose lowest corner is `start`.
inline Index3 window_center(const Index3& start, const Index3& dims) {
  return {start.x + dims.x / 2, start.y + dims.y / 2, start.z + dims.z / 2};
}

/// Voxel that must be ground for a window centered at `center`: the voxel
/// directly beneath the window's bottom layer.
inline Index3 ground_support_voxel(const Index3& center, const QueryExtent& query) {
  return {center.x, center.y, center.z - query.voxel_dims.z / 2 - 1};
}

/// Slides an all-ones box of the query's voxel dims over the occupancy grid
/// (valid positions only) and returns the center voxel of every window whose
/// occupancy sum is zero.
inline ValidLocationSet overlap_check(const VoxelGrid& grid, const QueryExtent& query) {
  const Index3 g = grid.dims();
  const Index3 d = query.voxel_dims;
  if (d.x > g.x || d.y > g.y || d.z > g.z)
    fail(ErrorKind::kInvalidArgument, "overlap_check: query is larger than the search grid");

  // Summed-volume table with a zero border: S(i,j,k) = sum over [0,i)x[0,j)x[0,k).
  const int sx = g.x + 1, sy = g.y + 1, sz = g.z + 1;
  std::vector<std::int32_t> sum(static_cast<std::size_t>(sx) * sy * sz, 0);
  auto at = [&](int i, int j, int k) -> std::int32_t& {
    return sum[(static_cast<std::size_t>(i) * sy + j) * sz + k];
  };
  for (int i = 1; i < sx; ++i)
    for (int j = 1; j < sy; ++j)
      for (int k = 1; k < sz; ++k)
        at(i, j, k) = static_cast<std::int32_t>(grid.occupied({i - 1, j - 1, k - 1})) + at(i - 1, j, k) +
                      at(i, j - 1, k) + at(i, j, k - 1) - at(i - 1, j - 1, k) - at(i - 1, j, k - 1) -
                      at(i, j - 1, k - 1) + at(i - 1, j - 1, k - 1);

  ValidLocationSet out;
  out.origin = grid.origin();
  out.voxel_size = grid.voxel_size();
  for (int x = 0; x + d.x <= g.x; ++x)
    for (int y = 0; y + d.y <= g.y; ++y)
      for (int z = 0; z + d.z <= g.z; ++z) {
        const int X = x + d.x, Y = y + d.y, Z = z + d.z;
        const std::int32_t s = at(X, Y, Z) - at(x, Y, Z) - at(X, y, Z) - at(X, Y, z) + at(x, y, Z) +
                               at(x, Y, z) + at(X, y, z) - at(x, y, z);
        if (s == 0) out.locations.push_back(window_center({x, y, z}, d));
      }
  return out;  // generated in lexicographic order, already sorted
}

/// Keeps candidates whose supporting voxel (see ground_support_voxel) is ground.
inline ValidLocationSet ground_filter(const ValidLocationSet& valid, const GroundVoxelSet& ground,
                                      const QueryExtent& query) {
  ValidLocationSet out;
  out.origin = valid.origin;
  out.voxel_size = valid.voxel_size;
  for (const auto& c : valid.locations)
    if (ground.contains(ground_support_voxel(c, query))) out.locations.push_back(c);
  return out;
}

/// Indices into valid.locations: n uniform draws without replacement.
inline std::vector<std::size_t> sample_location_indices(const ValidLocationSet& valid, std::size_t n,
                                                        std::uint64_t seed) {
  if (valid.empty()) fail(ErrorKind::kValidation, "no valid insertion location");
  require(n <= valid.size(), "sample_locations: more draws than candidates");
  return pool_sample_indices(valid.size(), n, seed);
}

/// n distinct candidates, returned as voxel-center coordinates in meters.
inline std::vector<Vec3> sample_locations(const ValidLocationSet& valid, std::size_t n, std::uint64_t seed) {
  std::vector<Vec3> out;
  for (auto i : sample_location_indices(valid, n, seed)) out.push_back(valid.center_of(valid.locations[i]));
  return out;
}

struct PlacedObject {
  PointCloud cloud;
  InsertionPlacement placement;
};

/// Moves the instance so its bbox center lands on `target`: a radial
/// translation along the capture azimuth, then a rotation about z by the
/// azimuth difference. The object keeps the side it showed the sensor.
inline PlacedObject place_object(const ObjectInstance& instance, const Vec3& target) {
  require(!instance.points.empty(), "place_object: empty instance");
  const Vec3& oq = instance.bbox_center;
  InsertionPlacement pl;
  pl.object_center = oq;
  pl.target_center = target;
  pl.radius_object = std::hypot(oq.x(), oq.y());
  pl.radius_target = std::hypot(target.x(), target.y());
  if (pl.radius_object < 1e-9)
    fail(ErrorKind::kInvalidArgument, "place_object: object center on the sensor axis, azimuth undefined");
  pl.azimuth_object = std::atan2(oq.y(), oq.x());
  pl.azimuth_target = std::atan2(target.y(), target.x());

  const double d_phi = pl.azimuth_target - pl.azimuth_object;
  const double d_rho = pl.radius_target - pl.radius_object;
  pl.translation.block<3, 1>(0, 3) =
      Vec3(d_rho * std::cos(pl.azimuth_object), d_rho * std::sin(pl.azimuth_object), target.z() - oq.z());
  pl.rotation.block<2, 2>(0, 0) << std::cos(d_phi), -std::sin(d_phi), std::sin(d_phi), std::cos(d_phi);

  PlacedObject out{instance.points, pl};
  const Eigen::Matrix4d m = pl.transform();
  for (auto& p : out.cloud.points) p = (m * p.homogeneous()).head<3>();
  return out;
}

struct AltitudeRefinement {
  PointCloud cloud;
  bool grounded = false;  // false: no ground point nearby, cloud unchanged
  double shift = 0.0;     // applied z offset
  double ground_z = 0.0;  // local ground estimate
};

/// Shifts the object along z so that its lowest point sits at the mean
/// height of the k ground points nearest (in xy) to its bbox center, using
/// only ground points within `radius` in xy.
inline AltitudeRefinement refine_altitude(const PointCloud& transformed, const PointCloud& ground_points,
                                          std::size_t k = 5, double radius = 2.0) {
  require(!transformed.empty(), "refine_altitude: empty object");
  AltitudeRefinement out{transformed};
  const Box box = bounding_box(transformed);
  const Eigen::Vector2d c = box.center.head<2>();
  std::vector<std::pair<double, double>> near;  // (squared xy distance, z)
  for (const auto& g : ground_points.points) {
    const double d2 = (g.head<2>() - c).squaredNorm();
    if (d2 <= radius * radius) near.emplace_back(d2, g.z());
  }
  if (near.empty() || k == 0) return out;
  const std::size_t kk = std::min(k, near.size());
  std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(kk), near.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < kk; ++i) sum += near[i].second;
  out.ground_z = sum / static_cast<double>(kk);
  out.shift = out.ground_z - (box.center.z() - 0.5 * box.extent.z());
  for (auto& p : out.cloud.points) p.z() += out.shift;
  out.grounded = true;
  return out;
}

/// Result of inserting objects into a scan.
struct InsertionRecord {
  std::size_t pool_index = 0;
  std::uint32_t class_id = 0;
  std::string source_id;
  std::uint32_t source_index = 0;
  Index3 location{};        // window-center voxel
  Vec3 target = Vec3::Zero();
  double altitude_shift = 0.0;
  double ground_z = 0.0;
  std::size_t points_inserted = 0;  // before style translation
  std::size_t points_retained = 0;  // after style translation
};

struct AugmentedScan {
  PointCloud points;
  LabelArray labels;
  std::vector<bool> inserted_mask;           // per output point
  std::vector<bool> valid_mask;              // per concatenated point (raw then inserted)
  std::vector<std::size_t> retained_indices; // concatenated index of each output point
  bool skipped = false;
  std::string skip_reason;
  std::vector<InsertionRecord> insertions;
};

/// Concatenates raw and inserted points, projects everything to the range
/// view, and keeps only the closest point per pixel (ties: lowest index).
/// This drops raw points hidden behind inserted objects and thins inserted
/// points to the sensor's angular resolution.
inline AugmentedScan style_translate(const PointCloud& raw, const LabelArray& raw_labels,
                                     std::span<const std::pair<PointCloud, std::uint32_t>> inserted,
                                     const RangeImageConfig& config) {
  require(raw.size() == raw_labels.size(), "style_translate: labels do not match scan");
  PointCloud all = raw;
  std::vector<std::uint32_t> all_labels = raw_labels.labels;
  std::vector<bool> from_insert(raw.size(), false);
  for (const auto& [cloud, cls] : inserted) {
    require(cls < raw_labels.num_classes || cls == kIgnoreLabel, "style_translate: inserted class out of range");
    all.append(cloud);
    all_labels.insert(all_labels.end(), cloud.size(), cls);
    from_insert.insert(from_insert.end(), cloud.size(), true);
  }

  const auto proj = project_to_range_view(all, config);
  AugmentedScan out;
  out.valid_mask.assign(all.size(), false);
  for (const auto& winner : proj.image.pixel_point)
    if (winner) out.valid_mask[*winner] = true;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (out.valid_mask[i]) out.retained_indices.push_back(i);

  out.points = all.select(out.retained_indices);
  out.labels.num_classes = raw_labels.num_classes;
  out.labels.labels.reserve(out.retained_indices.size());
  out.inserted_mask.reserve(out.retained_indices.size());
  for (auto i : out.retained_indices) {
    out.labels.labels.push_back(all_labels[i]);
    out.inserted_mask.push_back(from_insert[i]);
  }
  return out;
}

struct VgiConfig {
  double voxel_size = 0.5;
  SearchArea area{Vec3(-40.0, -40.0, -3.0), Vec3(40.0, 40.0, 3.0)};
  RangeImageConfig range_view;
  std::size_t n_objects = 1;
  GroundDetectorParams ground;
  std::size_t refine_neighbours = 5;
  double refine_radius = 2.0;
  std::size_t max_placement_attempts = 8;

  void validate() const {
    require(voxel_size > 0.0, "vgi: voxel_size must be > 0");
    area.validate();
    range_view.validate();
    ground.validate();
    require(n_objects >= 1, "vgi: n_objects must be >= 1");
    require(max_placement_attempts >= 1, "vgi: max_placement_attempts must be >= 1");
  }
};

struct StageTimings {
  double voxelize = 0.0;
  double overlap = 0.0;
  double ground = 0.0;
  double place = 0.0;
  double style_translate = 0.0;

  double total() const { return voxelize + overlap + ground + place + style_translate; }
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(double* sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    if (sink_)
      *sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  double* sink_;
  std::chrono::steady_clock::time_point start_;
};

inline AugmentedScan passthrough(const PointCloud& scan, const LabelArray& labels, std::string reason) {
  AugmentedScan out;
  out.points = scan;
  out.labels = labels;
  out.inserted_mask.assign(scan.size(), false);
  out.valid_mask.assign(scan.size(), true);
  out.retained_indices.resize(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) out.retained_indices[i] = i;
  out.skipped = true;
  out.skip_reason = std::move(reason);
  return out;
}

/// True when every point lies in the grid and none hits a blocked voxel.
inline bool fits(const PointCloud& cloud, const VoxelGrid& blocked) {
  for (const auto& p : cloud.points) {
    const auto v = blocked.index_of(p);
    if (!v || blocked.occupied(*v)) return false;
  }
  return true;
}

}  // namespace detail

/// Full insertion pipeline for one scan. Returns the scan unchanged with
/// `skipped` set when the pool is empty or no valid grounded location exists.
/// `ground` may carry externally computed ground labels; otherwise the
/// built-in detector runs.
inline AugmentedScan vgi_insert(const PointCloud& scan, const LabelArray& pseudo_labels, const ObjectPool& pool,
                                const VgiConfig& config, std::uint64_t seed,
                                const GroundLabeling* ground = nullptr, StageTimings* timings = nullptr) {
  config.validate();
  io::check_paired(scan, pseudo_labels, "vgi_insert");
  if (pool.instances.empty()) return detail::passthrough(scan, pseudo_labels, "empty pool");
  if (ground) require(ground->is_ground.size() == scan.size(), "vgi_insert: ground labels do not match scan");

  std::vector<std::size_t> picked;
  QueryExtent query;
  VoxelGrid grid;
  ValidLocationSet valid;
  GroundLabeling detected;
  PointCloud ground_cloud;
  VoxelGrid blocked;

  {
    detail::StageClock clock(timings ? &timings->voxelize : nullptr);
    grid = voxelize(scan, config.voxel_size, config.area);
  }
  {
    detail::StageClock clock(timings ? &timings->overlap : nullptr);
    picked = pool_sample_indices(pool.instances.size(), config.n_objects, derive_seed(seed, "pool"));
    std::vector<ObjectInstance> sampled;
    for (auto i : picked) sampled.push_back(pool.instances[i]);
    query = compute_query_extent(sampled, config.voxel_size);
    valid = overlap_check(grid, query);
  }
  {
    detail::StageClock clock(timings ? &timings->ground : nullptr);
    if (!ground) {
      detected = detect_ground(scan, config.ground, derive_seed(seed, "ground"));
      ground = &detected;
    }
    ground_cloud = ground_subcloud(*ground, scan);
    valid = ground_filter(valid, ground_voxels(*ground, scan, grid), query);
    // Objects may rest on ground voxels but must not touch anything else.
    PointCloud non_ground;
    for (std::size_t i = 0; i < scan.size(); ++i)
      if (!ground->is_ground[i]) non_ground.push_back(scan.points[i]);
    blocked = voxelize(non_ground, config.voxel_size, config.area);
  }
  if (valid.empty()) return detail::passthrough(scan, pseudo_labels, "no valid insertion location");

  std::vector<std::pair<PointCloud, std::uint32_t>> inserted;
  std::vector<InsertionRecord> records;
  {
    detail::StageClock clock(timings ? &timings->place : nullptr);
    const std::size_t draws = std::min(valid.size(), config.n_objects * config.max_placement_attempts);
    const auto order = sample_location_indices(valid, draws, derive_seed(seed, "locations"));
    std::size_t next = 0;
    for (auto pool_index : picked) {
      const auto& inst = pool.instances[pool_index];
      for (std::size_t attempt = 0; attempt < config.max_placement_attempts && next < order.size(); ++attempt) {
        const Index3 loc = valid.locations[order[next++]];
        const Vec3 target = valid.center_of(loc);
        if (std::hypot(inst.bbox_center.x(), inst.bbox_center.y()) < 1e-9) break;
        auto placed = place_object(inst, target);
        auto refined = refine_altitude(placed.cloud, ground_cloud, config.refine_neighbours, config.refine_radius);
        if (!refined.grounded || !detail::fits(refined.cloud, blocked)) continue;
        for (const auto& p : refined.cloud.points) blocked.set(*blocked.index_of(p));
        InsertionRecord rec;
        rec.pool_index = pool_index;
        rec.class_id = inst.class_id;
        rec.source_id = inst.source_id;
        rec.source_index = inst.source_index;
        rec.location = loc;
        rec.target = target;
        rec.altitude_shift = refined.shift;
        rec.ground_z = refined.ground_z;
        rec.points_inserted = refined.cloud.size();
        records.push_back(std::move(rec));
        inserted.emplace_back(std::move(refined.cloud), inst.class_id);
        break;
      }
    }
  }
  if (inserted.empty()) return detail::passthrough(scan, pseudo_labels, "no placement passed verification");

  AugmentedScan out;
  {
    detail::StageClock clock(timings ? &timings->style_translate : nullptr);
    out = style_translate(scan, pseudo_labels, inserted, config.range_view);
  }
  std::size_t offset = scan.size();
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (std::size_t i = 0; i < inserted[r].first.size(); ++i) records[r].points_retained += out.valid_mask[offset + i];
    offset += inserted[r].first.size();
  }
  out.insertions = std::move(records);
  return out;
}

}  // namespace pcaug
