// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ray-cast synthetic LiDAR scenes with known ground truth, and synthetic
// object instances for the pool.

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "pcaug/object_pool.hpp"
#include "pcaug/point_cloud.hpp"

namespace pcaug::synth {

inline constexpr std::uint32_t kRoad = 40;
inline constexpr std::uint32_t kCar = 10;
inline constexpr std::uint32_t kBuilding = 50;
inline constexpr std::uint32_t kPedestrian = 30;
inline constexpr std::uint32_t kBicycle = 11;
inline constexpr std::uint32_t kMotorcycle = 15;
inline constexpr std::uint32_t kNumClasses = 260;

struct Aabb {
  Vec3 lo, hi;
};

struct SceneParams {
  int beams = 32;
  int columns = 1024;
  double fov_up_deg = 2.0;
  double fov_down_deg = -24.8;
  double sensor_height = 1.73;
  int obstacles = 8;
  double wall_radius = 0.0;  // 0 disables the surrounding wall
  double wall_height = 4.0;
  double max_range = 80.0;
  double range_noise = 0.0;  // stddev, meters
};

struct Scene {
  PointCloud cloud;
  LabelArray labels;
  std::vector<bool> ground_truth;  // true for points on the ground plane
  std::vector<Aabb> obstacles;
  double ground_z = 0.0;
};

/// Rounds every coordinate to float precision so scans survive a file round
/// trip bit-exactly.
inline Vec3 to_float_precision(const Vec3& p) {
  Vec3 q;
  for (int a = 0; a < 3; ++a) {
    // volatile: the optimizer otherwise folds the round trip away when inlined.
    volatile float f = static_cast<float>(p[a]);
    q[a] = f;
  }
  return q;
}

inline std::optional<double> ray_box(const Vec3& d, const Aabb& b) {
  double t0 = 0.0, t1 = 1e9;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (0.0 < b.lo[a] || 0.0 > b.hi[a]) return std::nullopt;
      continue;
    }
    double ta = b.lo[a] / d[a], tb = b.hi[a] / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0 > 1e-9 ? std::optional<double>(t0) : std::nullopt;
}

/// Spinning-LiDAR scan of a flat ground plane with box obstacles, sensor at
/// the origin `sensor_height` above the ground.
inline Scene make_scene(const SceneParams& sp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Scene s;
  s.ground_z = -sp.sensor_height;
  s.labels.num_classes = kNumClasses;
  for (int k = 0; k < sp.obstacles; ++k) {
    const double r = 6.0 + 26.0 * unit(rng);
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const Vec3 c(r * std::cos(phi), r * std::sin(phi), 0.0);
    const Vec3 half(0.5 + 1.5 * unit(rng), 0.5 + 1.5 * unit(rng), 0.0);
    const double height = 0.8 + 2.5 * unit(rng);
    s.obstacles.push_back({Vec3(c.x() - half.x(), c.y() - half.y(), s.ground_z),
                           Vec3(c.x() + half.x(), c.y() + half.y(), s.ground_z + height)});
  }
  const double up = sp.fov_up_deg * std::numbers::pi / 180.0;
  const double down = sp.fov_down_deg * std::numbers::pi / 180.0;
  for (int b = 0; b < sp.beams; ++b) {
    const double pitch = sp.beams == 1 ? down : up + (down - up) * b / (sp.beams - 1.0);
    for (int col = 0; col < sp.columns; ++col) {
      const double yaw = -std::numbers::pi + 2.0 * std::numbers::pi * (col + 0.5) / sp.columns;
      const Vec3 d(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
      double best = sp.max_range;
      std::uint32_t label = 0;
      bool ground = false;
      if (d.z() < 0) {
        const double t = s.ground_z / d.z();
        if (t < best) best = t, label = kRoad, ground = true;
      }
      for (const auto& box : s.obstacles)
        if (auto t = ray_box(d, box); t && *t < best) best = *t, label = kCar, ground = false;
      if (sp.wall_radius > 0.0) {
        const double t = sp.wall_radius / std::cos(pitch);
        const double z = t * d.z();
        if (t < best && z >= s.ground_z && z <= s.ground_z + sp.wall_height)
          best = t, label = kBuilding, ground = false;
      }
      if (label == 0) continue;
      if (sp.range_noise > 0) best += sp.range_noise * noise(rng);
      const Vec3 p = to_float_precision(d * best);
      s.cloud.push_back(p, static_cast<float>(unit(rng)));
      s.labels.labels.push_back(label);
      s.ground_truth.push_back(ground);
    }
  }
  return s;
}

/// Visible surface of an upright object (cylinder or box) captured at
/// horizontal range `range` and azimuth `azimuth`, standing on `ground_z`.
inline ObjectInstance make_instance(std::uint32_t cls, double range, double azimuth, double ground_z,
                                    std::uint64_t seed, const std::string& source = "synthetic",
                                    std::uint32_t index = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double radius = 0.3, height = 1.7;
  int n = 150;
  if (cls == kBicycle) radius = 0.8, height = 1.1, n = 120;
  if (cls == kMotorcycle) radius = 1.0, height = 1.3, n = 180;
  const Vec3 c(range * std::cos(azimuth), range * std::sin(azimuth), ground_z);
  ObjectInstance inst;
  inst.class_id = cls;
  inst.source_id = source;
  inst.source_index = index;
  for (int i = 0; i < n; ++i) {
    // Half cylinder facing the sensor.
    const double a = azimuth + std::numbers::pi * (0.5 + unit(rng));
    const double rr = cls == kPedestrian ? radius : radius * (0.3 + 0.7 * unit(rng));
    Vec3 p(c.x() + rr * std::cos(a), c.y() + rr * std::sin(a), ground_z + height * unit(rng));
    if (i == 0) p.z() = ground_z;  // touches the ground
    inst.points.push_back(to_float_precision(p), static_cast<float>(unit(rng)));
  }
  inst.refresh_bbox();
  return inst;
}

/// Pool of `per_class` instances for each of pedestrian, bicycle, motorcycle.
inline ObjectPool make_pool(std::size_t per_class, double ground_z, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ObjectPool pool;
  std::uint32_t idx = 0;
  for (auto cls : {kPedestrian, kBicycle, kMotorcycle})
    for (std::size_t k = 0; k < per_class; ++k)
      pool.instances.push_back(make_instance(cls, 5.0 + 15.0 * unit(rng), 2.0 * std::numbers::pi * unit(rng),
                                             ground_z, rng(), "synthetic", idx++));
  pool.canonicalize();
  return pool;
}

}  // namespace pcaug::synth
