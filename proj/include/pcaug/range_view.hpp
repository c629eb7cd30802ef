// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "pcaug/point_cloud.hpp"

namespace pcaug {

struct RangeImageConfig {
  int height = 64;
  int width = 2048;
  double fov_up = 3.0 * std::numbers::pi / 180.0;     // radians, above horizon
  double fov_down = -25.0 * std::numbers::pi / 180.0; // radians, usually negative
  double max_range = 80.0;

  double total_fov() const { return std::abs(fov_up) + std::abs(fov_down); }

  void validate() const {
    require(height > 0 && width > 0, "range image: height and width must be positive");
    require(std::isfinite(fov_up) && std::isfinite(fov_down), "range image: non-finite fov");
    require(total_fov() > 0.0, "range image: total field of view must be > 0");
    require(max_range > 0.0, "range image: max_range must be > 0");
  }
};

struct Pixel {
  int u = 0;  // column
  int v = 0;  // row
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Per-pixel winner of the minimum-range competition.
struct RangeImage {
  RangeImageConfig config;
  std::vector<std::optional<std::size_t>> pixel_point;  // row-major H x W
  std::vector<double> pixel_range;                      // 0 where empty

  std::size_t at(const Pixel& px) const {
    return static_cast<std::size_t>(px.v) * config.width + px.u;
  }
};

/// Spherical projection of one point: u from azimuth, v from elevation,
/// clamped onto the image border.
inline Pixel project_point(const Vec3& p, const RangeImageConfig& cfg) {
  const double r = p.norm();
  const double yaw = std::atan2(p.y(), p.x());
  const double pitch = r > 0.0 ? std::asin(std::clamp(p.z() / r, -1.0, 1.0)) : 0.0;
  const double u = 0.5 * (1.0 - yaw / std::numbers::pi) * cfg.width;
  const double v = (1.0 - (pitch + std::abs(cfg.fov_down)) / cfg.total_fov()) * cfg.height;
  const int ui = static_cast<int>(std::clamp(std::floor(u), 0.0, cfg.width - 1.0));
  const int vi = static_cast<int>(std::clamp(std::floor(v), 0.0, cfg.height - 1.0));
  return {ui, vi};
}

struct RangeProjection {
  std::vector<Pixel> pixels;  // one per input point
  RangeImage image;
};

/// Projects every point and keeps, per pixel, the closest point
/// (ties go to the lowest index).
inline RangeProjection project_to_range_view(const PointCloud& cloud,
                                             const RangeImageConfig& cfg) {
  cfg.validate();
  RangeProjection out;
  out.image.config = cfg;
  const std::size_t n_px = static_cast<std::size_t>(cfg.height) * cfg.width;
  out.image.pixel_point.assign(n_px, std::nullopt);
  out.image.pixel_range.assign(n_px, 0.0);
  out.pixels.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Pixel px = project_point(cloud.points[i], cfg);
    out.pixels.push_back(px);
    const std::size_t k = out.image.at(px);
    const double r = cloud.points[i].norm();
    if (!out.image.pixel_point[k] || r < out.image.pixel_range[k]) {
      out.image.pixel_point[k] = i;
      out.image.pixel_range[k] = r;
    }
  }
  return out;
}

}  // namespace pcaug
