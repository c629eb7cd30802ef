// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "pcaug/point_cloud.hpp"

namespace pcaug {

/// Dense occupancy grid. Voxel (i,j,k) covers the half-open box
/// origin + [i,i+1) x [j,j+1) x [k,k+1) times voxel_size. Points at or beyond
/// `limit` (the far corner of the covered area) map to no voxel, even when the
/// last voxel layer reaches past it.
class VoxelGrid {
 public:
  VoxelGrid() = default;

  VoxelGrid(const Vec3& origin, double voxel_size, Index3 dims)
      : origin_(origin), voxel_size_(voxel_size), dims_(dims) {
    require(voxel_size > 0.0 && std::isfinite(voxel_size), "voxel grid: voxel_size must be > 0");
    require(dims.x >= 1 && dims.y >= 1 && dims.z >= 1, "voxel grid: dims must be >= 1");
    occupancy_.assign(static_cast<std::size_t>(dims.x) * dims.y * dims.z, 0);
    limit_ = origin + voxel_size * Vec3(dims.x, dims.y, dims.z);
  }

  VoxelGrid(const Vec3& origin, double voxel_size, Index3 dims, const Vec3& limit)
      : VoxelGrid(origin, voxel_size, dims) {
    limit_ = limit_.cwiseMin(limit);
  }

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const Index3& dims() const { return dims_; }
  const Vec3& limit() const { return limit_; }
  std::size_t voxel_total() const { return occupancy_.size(); }

  bool in_bounds(const Index3& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims_.x && v.y < dims_.y && v.z < dims_.z;
  }

  std::size_t flat(const Index3& v) const {
    return (static_cast<std::size_t>(v.x) * dims_.y + v.y) * dims_.z + v.z;
  }

  bool occupied(const Index3& v) const { return occupancy_[flat(v)] != 0; }
  void set(const Index3& v, bool on = true) { occupancy_[flat(v)] = on ? 1 : 0; }

  /// Voxel containing `p`, or nullopt when it lies outside the grid.
  std::optional<Index3> index_of(const Vec3& p) const {
    if (!(p.array() >= origin_.array()).all() || !(p.array() < limit_.array()).all())
      return std::nullopt;
    const Vec3 q = (p - origin_) / voxel_size_;
    const Index3 v{static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
                   static_cast<int>(std::floor(q.z()))};
    if (!q.allFinite() || !in_bounds(v)) return std::nullopt;
    return v;
  }

  Vec3 voxel_center(const Index3& v) const {
    return origin_ + voxel_size_ * Vec3(v.x + 0.5, v.y + 0.5, v.z + 0.5);
  }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (auto o : occupancy_) n += o;
    return n;
  }

  const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }

  /// Same geometry, nothing occupied.
  VoxelGrid cleared() const {
    VoxelGrid g = *this;
    std::fill(g.occupancy_.begin(), g.occupancy_.end(), 0);
    return g;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  Vec3 limit_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  Index3 dims_{};
  std::vector<std::uint8_t> occupancy_;
};

/// Empty grid covering `area` with its origin at area.corner_lo.
inline VoxelGrid make_grid(double voxel_size, const SearchArea& area) {
  require(voxel_size > 0.0 && std::isfinite(voxel_size), "voxelize: voxel_size must be > 0");
  area.validate();
  const Vec3 e = area.extent();
  return VoxelGrid(area.corner_lo, voxel_size,
                   {voxel_count(e.x(), voxel_size), voxel_count(e.y(), voxel_size),
                    voxel_count(e.z(), voxel_size)},
                   area.corner_hi);
}

/// Marks every voxel holding at least one point of `cloud` that lies inside `area`.
inline VoxelGrid voxelize(const PointCloud& cloud, double voxel_size, const SearchArea& area) {
  VoxelGrid grid = make_grid(voxel_size, area);
  for (const auto& p : cloud.points)
    if (auto v = grid.index_of(p)) grid.set(*v);
  return grid;
}

}  // namespace pcaug
