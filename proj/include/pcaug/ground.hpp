// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ground prior for insertion: a patch-wise plane fitter over a polar grid, or
// externally computed labels ingested from a byte-per-point file.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <tuple>
#include <vector>

#include "pcaug/io.hpp"
#include "pcaug/point_cloud.hpp"
#include "pcaug/random.hpp"
#include "pcaug/voxel_grid.hpp"

namespace pcaug {

struct GroundDetectorParams {
  double cell_size = 2.0;          // ring width, meters
  int sectors = 16;                // azimuth sectors per ring
  int ransac_iters = 50;
  double inlier_threshold = 0.15;  // meters
  double max_slope = 20.0 * std::numbers::pi / 180.0;
  double seed_height_margin = 0.3; // meters above the patch minimum
  double max_relative_height = 0.2; // meters a ground point may rise above the neighbourhood ground

  void validate() const {
    require(cell_size > 0 && sectors > 0 && ransac_iters > 0 && inlier_threshold > 0 &&
                max_slope > 0 && seed_height_margin > 0 && max_relative_height > 0,
            "ground detector: all parameters must be positive");
  }
};

/// One flag per point of the associated cloud.
struct GroundLabeling {
  std::vector<bool> is_ground;

  std::size_t ground_count() const {
    return static_cast<std::size_t>(std::count(is_ground.begin(), is_ground.end(), true));
  }
};

/// Sorted, duplicate-free voxel indices that hold at least one ground point.
struct GroundVoxelSet {
  std::vector<Index3> voxels;

  bool contains(const Index3& v) const { return std::binary_search(voxels.begin(), voxels.end(), v); }
  std::size_t size() const { return voxels.size(); }
  bool empty() const { return voxels.empty(); }
};

namespace detail {

struct Plane {
  Vec3 normal;  // unit, normal.z() >= 0
  double offset = 0.0;  // normal . p + offset = 0

  double distance(const Vec3& p) const { return std::abs(normal.dot(p) + offset); }
  double height_at(double x, double y) const { return -(normal.x() * x + normal.y() * y + offset) / normal.z(); }
};

inline bool slope_ok(const Vec3& unit_normal, double max_slope) {
  return std::acos(std::clamp(unit_normal.z(), -1.0, 1.0)) <= max_slope;
}

/// Total least-squares plane through `pts`.
inline std::optional<Plane> fit_plane(const std::vector<Vec3>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vec3 n = eig.eigenvectors().col(0);
  if (n.z() < 0) n = -n;
  return Plane{n, -n.dot(mean)};
}

/// Fits the patch's ground plane; marks its inliers and returns the plane,
/// or nullopt (nothing marked) when no admissible plane exists.
inline std::optional<Plane> fit_patch(const std::vector<Vec3>& pts, const GroundDetectorParams& params, Rng& rng,
                                      std::vector<bool>& is_ground_local) {
  if (pts.size() < 3) return std::nullopt;
  double z_min = pts.front().z();
  for (const auto& p : pts) z_min = std::min(z_min, p.z());

  std::vector<Vec3> seeds;
  for (const auto& p : pts)
    if (p.z() <= z_min + params.seed_height_margin) seeds.push_back(p);
  if (seeds.size() < 3) return std::nullopt;
  // Canonical order keeps sampling independent of input point order.
  std::sort(seeds.begin(), seeds.end(), [](const Vec3& a, const Vec3& b) {
    return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
  });

  std::optional<Plane> best;
  std::size_t best_inliers = 0;
  for (int it = 0; it < params.ransac_iters; ++it) {
    const auto a = uniform_index(rng, seeds.size());
    const auto b = uniform_index(rng, seeds.size());
    const auto c = uniform_index(rng, seeds.size());
    if (a == b || b == c || a == c) continue;
    Vec3 n = (seeds[b] - seeds[a]).cross(seeds[c] - seeds[a]);
    if (n.norm() < 1e-6) continue;
    n.normalize();
    if (n.z() < 0) n = -n;
    if (!slope_ok(n, params.max_slope)) continue;
    const Plane h{n, -n.dot(seeds[a])};
    std::size_t count = 0;
    for (const auto& p : pts) count += h.distance(p) <= params.inlier_threshold;
    if (count > best_inliers) {
      best_inliers = count;
      best = h;
    }
  }
  if (!best) return std::nullopt;

  // Least-squares refinement on the inlier set until it stops changing.
  Plane plane = *best;
  std::vector<bool> inlier(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) inlier[i] = plane.distance(pts[i]) <= params.inlier_threshold;
  for (int round = 0; round < params.ransac_iters; ++round) {
    std::vector<Vec3> support;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (inlier[i]) support.push_back(pts[i]);
    const auto refined = fit_plane(support);
    if (!refined) break;
    plane = *refined;
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const bool in = plane.distance(pts[i]) <= params.inlier_threshold;
      changed |= in != inlier[i];
      inlier[i] = in;
    }
    if (!changed) break;
  }
  if (!slope_ok(plane.normal, params.max_slope)) return std::nullopt;
  for (std::size_t i = 0; i < pts.size(); ++i) is_ground_local[i] = inlier[i];
  return plane;
}

}  // namespace detail

/// Labels ground points patch by patch. Patches are concentric rings of
/// width cell_size split into `sectors` azimuth sectors. In each patch the
/// lowest points seed a sampled plane search, the best slope-admissible plane
/// is refined by least squares, and its inliers become ground candidates.
/// A candidate survives only if it is at most max_relative_height above the
/// median of the neighbouring patch planes (rings +-2, sectors +-1, the own
/// plane included) evaluated at its xy. This drops elevated flat surfaces
/// such as roofs and the foot of walls that tilt a sparse patch's plane.
inline GroundLabeling detect_ground(const PointCloud& cloud, const GroundDetectorParams& params,
                                    std::uint64_t seed) {
  params.validate();
  GroundLabeling out;
  out.is_ground.assign(cloud.size(), false);
  std::map<std::pair<int, int>, std::vector<std::size_t>> patches;
  const double sector_width = 2.0 * std::numbers::pi / params.sectors;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const int ring = static_cast<int>(std::floor(std::hypot(p.x(), p.y()) / params.cell_size));
    const int sector = std::clamp(
        static_cast<int>(std::floor((std::atan2(p.y(), p.x()) + std::numbers::pi) / sector_width)), 0,
        params.sectors - 1);
    patches[{ring, sector}].push_back(i);
  }

  struct Fit {
    detail::Plane plane;
    std::vector<std::size_t> ground;
  };
  std::map<std::pair<int, int>, Fit> fits;
  std::vector<Vec3> pts;
  std::vector<bool> local;
  for (auto& [key, members] : patches) {
    // Coordinate order makes every floating-point sum independent of input order.
    std::sort(members.begin(), members.end(), [&cloud](std::size_t a, std::size_t b) {
      const auto &pa = cloud.points[a], &pb = cloud.points[b];
      return std::tie(pa.x(), pa.y(), pa.z(), a) < std::tie(pb.x(), pb.y(), pb.z(), b);
    });
    pts.clear();
    for (auto i : members) pts.push_back(cloud.points[i]);
    local.assign(members.size(), false);
    Rng rng(derive_seed(seed, (static_cast<std::uint64_t>(key.first) << 32) |
                                  static_cast<std::uint32_t>(key.second)));
    const auto plane = detail::fit_patch(pts, params, rng, local);
    if (!plane) continue;
    Fit f{*plane, {}};
    for (std::size_t k = 0; k < members.size(); ++k)
      if (local[k]) f.ground.push_back(members[k]);
    fits.emplace(key, std::move(f));
  }

  std::vector<const detail::Plane*> nbrs;
  std::vector<double> heights;
  for (const auto& [key, f] : fits) {
    nbrs.clear();
    for (int dr = -2; dr <= 2; ++dr)
      for (int ds = -1; ds <= 1; ++ds) {
        const int sector = ((key.second + ds) % params.sectors + params.sectors) % params.sectors;
        auto it = fits.find({key.first + dr, sector});
        if (it != fits.end()) nbrs.push_back(&it->second.plane);
      }
    for (auto i : f.ground) {
      const auto& p = cloud.points[i];
      heights.clear();
      for (const auto* h : nbrs) heights.push_back(h->height_at(p.x(), p.y()));
      std::nth_element(heights.begin(), heights.begin() + heights.size() / 2, heights.end());
      if (p.z() <= heights[heights.size() / 2] + params.max_relative_height) out.is_ground[i] = true;
    }
  }
  return out;
}

/// Reads externally produced ground labels (one 0/1 byte per point).
inline GroundLabeling ingest_ground(const std::filesystem::path& path, const PointCloud& cloud) {
  return {io::load_flags(path, cloud.size())};
}

inline void save_ground(const GroundLabeling& labeling, const std::filesystem::path& path) {
  io::save_flags(labeling.is_ground, path);
}

inline PointCloud ground_subcloud(const GroundLabeling& labeling, const PointCloud& cloud) {
  require(labeling.is_ground.size() == cloud.size(), "ground labeling does not match cloud");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (labeling.is_ground[i]) idx.push_back(i);
  return cloud.select(idx);
}

/// Voxels of `grid` containing at least one ground point.
inline GroundVoxelSet ground_voxels(const GroundLabeling& labeling, const PointCloud& cloud,
                                    const VoxelGrid& grid) {
  require(labeling.is_ground.size() == cloud.size(), "ground labeling does not match cloud");
  GroundVoxelSet out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!labeling.is_ground[i]) continue;
    if (auto v = grid.index_of(cloud.points[i])) out.voxels.push_back(*v);
  }
  std::sort(out.voxels.begin(), out.voxels.end());
  out.voxels.erase(std::unique(out.voxels.begin(), out.voxels.end()), out.voxels.end());
  return out;
}

}  // namespace pcaug
