// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

#include "pcaug/point_cloud.hpp"

namespace pcaug {

struct DbscanParams {
  double eps = 0.5;   // neighbourhood radius, meters
  int min_pts = 10;   // neighbourhood size (including the point) that makes a core point

  void validate() const {
    require(eps > 0.0 && std::isfinite(eps), "dbscan: eps must be > 0");
    require(min_pts >= 1, "dbscan: min_pts must be >= 1");
  }
};

inline constexpr int kNoise = -1;

namespace detail {

/// Uniform hash grid with cell edge eps; radius queries touch 27 cells.
class NeighbourGrid {
 public:
  NeighbourGrid(const std::vector<Vec3>& pts, double eps) : pts_(pts), eps_(eps), eps2_(eps * eps) {
    for (std::uint32_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(i);
  }

  void radius_query(std::size_t i, std::vector<std::uint32_t>& out) const {
    out.clear();
    const Index3 c = cell_of(pts_[i]);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c.x + dx, c.y + dy, c.z + dz}));
          if (it == cells_.end()) continue;
          for (auto j : it->second)
            if ((pts_[j] - pts_[i]).squaredNorm() <= eps2_) out.push_back(j);
        }
  }

 private:
  Index3 cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor(p.x() / eps_)), static_cast<int>(std::floor(p.y() / eps_)),
            static_cast<int>(std::floor(p.z() / eps_))};
  }
  static std::uint64_t key(const Index3& c) {
    auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v) & 0x1FFFFF); };
    return (u(c.x) << 42) | (u(c.y) << 21) | u(c.z);
  }

  const std::vector<Vec3>& pts_;
  double eps_, eps2_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace detail

/// Density-based clustering. Returns one id per point, kNoise for noise.
/// Cluster ids are assigned in order of discovery while scanning points by
/// index; a border point joins the first cluster that reaches it.
inline std::vector<int> dbscan_cluster(const PointCloud& cloud, const DbscanParams& params) {
  params.validate();
  constexpr int kUnvisited = -2;
  const std::size_t n = cloud.size();
  std::vector<int> label(n, kUnvisited);
  if (n == 0) return label;

  detail::NeighbourGrid grid(cloud.points, params.eps);
  std::vector<std::uint32_t> nbrs;
  std::deque<std::uint32_t> frontier;
  int next_id = 0;

  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    grid.radius_query(i, nbrs);
    if (static_cast<int>(nbrs.size()) < params.min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int id = next_id++;
    label[i] = id;
    frontier.assign(nbrs.begin(), nbrs.end());
    while (!frontier.empty()) {
      const auto j = frontier.front();
      frontier.pop_front();
      if (label[j] == kNoise) label[j] = id;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = id;
      grid.radius_query(j, nbrs);
      if (static_cast<int>(nbrs.size()) >= params.min_pts)
        frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
    }
  }
  return label;
}

}  // namespace pcaug
