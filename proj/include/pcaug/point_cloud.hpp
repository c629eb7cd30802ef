// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pcaug/error.hpp"

namespace pcaug {

using Vec3 = Eigen::Vector3d;

/// Class id used for points that carry no supervision.
inline constexpr std::uint32_t kIgnoreLabel = 0xFFFF;

/// Point coordinates in the sensor frame (meters), with optional intensity.
/// An empty intensity vector means the channel is absent.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !intensity.empty(); }

  void push_back(const Vec3& p) { points.push_back(p); }
  void push_back(const Vec3& p, float i) {
    points.push_back(p);
    intensity.push_back(i);
  }

  /// Throws if any coordinate is non-finite or parallel arrays disagree.
  void validate() const {
    require(intensity.empty() || intensity.size() == points.size(),
            "point cloud: intensity count does not match point count");
    for (const auto& p : points)
      require(p.allFinite(), "point cloud: non-finite coordinate");
  }

  /// Concatenates `other`; a missing intensity channel on either side is zero-filled.
  void append(const PointCloud& other) {
    if (has_intensity() || other.has_intensity()) {
      intensity.resize(points.size(), 0.0f);
      if (other.has_intensity())
        intensity.insert(intensity.end(), other.intensity.begin(), other.intensity.end());
      else
        intensity.resize(points.size() + other.size(), 0.0f);
    }
    points.insert(points.end(), other.points.begin(), other.points.end());
  }

  PointCloud select(std::span<const std::size_t> indices) const {
    PointCloud out;
    out.points.reserve(indices.size());
    for (auto i : indices) out.points.push_back(points[i]);
    if (has_intensity()) {
      out.intensity.reserve(indices.size());
      for (auto i : indices) out.intensity.push_back(intensity[i]);
    }
    return out;
  }
};

/// Per-point class ids. Every label is < num_classes or equals kIgnoreLabel.
struct LabelArray {
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    for (auto l : labels)
      require(l < num_classes || l == kIgnoreLabel,
              "label " + std::to_string(l) + " out of range for " +
                  std::to_string(num_classes) + " classes");
  }
};

/// Integer voxel index.
struct Index3 {
  int x = 0, y = 0, z = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3&, const Index3&) = default;
};

/// Axis-aligned box given by its two corners.
struct SearchArea {
  Vec3 corner_lo = Vec3::Zero();
  Vec3 corner_hi = Vec3::Zero();

  Vec3 extent() const { return (corner_hi - corner_lo).cwiseAbs(); }

  void validate() const {
    require(corner_lo.allFinite() && corner_hi.allFinite(), "search area: non-finite corner");
    require((corner_lo.array() <= corner_hi.array()).all(),
            "search area: corner_lo must not exceed corner_hi");
    require((extent().array() > 0.0).all(), "search area: degenerate extent");
  }

  /// Half-open membership: lo <= p < hi on every axis.
  bool contains(const Vec3& p) const {
    return (p.array() >= corner_lo.array()).all() && (p.array() < corner_hi.array()).all();
  }
};

/// Number of voxels needed to cover `length` meters; at least 1.
inline int voxel_count(double length, double voxel_size) {
  // The relative slack absorbs quotients like 3.0000000000000004.
  const double q = length / voxel_size;
  return std::max(1, static_cast<int>(std::ceil(q - 1e-9 * std::max(1.0, q))));
}

/// Extent (max - min per axis) of the union of all points of all clouds.
inline Vec3 bounding_extent(std::span<const PointCloud> clouds) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  bool any = false;
  for (const auto& c : clouds) {
    for (const auto& p : c.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      any = true;
    }
  }
  require(any, "bounding_extent: no points");
  return hi - lo;
}

inline Vec3 bounding_extent(const PointCloud& cloud) {
  return bounding_extent(std::span<const PointCloud>(&cloud, 1));
}

/// Center and extent of the axis-aligned bounding box of a non-empty cloud.
struct Box {
  Vec3 center;
  Vec3 extent;
};

inline Box bounding_box(const PointCloud& cloud) {
  require(!cloud.empty(), "bounding_box: empty cloud");
  Vec3 lo = cloud.points.front();
  Vec3 hi = lo;
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {(lo + hi) * 0.5, hi - lo};
}

}  // namespace pcaug
