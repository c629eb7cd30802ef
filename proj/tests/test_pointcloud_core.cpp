// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "pcaug/insertion.hpp"
#include "pcaug/io.hpp"
#include "pcaug/range_view.hpp"
#include "pcaug/voxel_grid.hpp"

namespace fs = std::filesystem;
using namespace pcaug;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pcaug_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PointCloud random_cloud(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(static_cast<float>(lo), static_cast<float>(hi));
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(Vec3(u(rng), u(rng), u(rng)), u(rng));
  return c;
}

SearchArea cube(double lo, double hi) { return {Vec3::Constant(lo), Vec3::Constant(hi)}; }

}  // namespace

TEST(Voxelize, SinglePointSingleVoxel) {
  PointCloud c;
  c.push_back(Vec3(0.1, 0.1, 0.1));
  const auto g = voxelize(c, 0.5, cube(0, 1));
  EXPECT_EQ(g.dims(), (Index3{2, 2, 2}));
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_TRUE(g.occupied({0, 0, 0}));
}

TEST(Voxelize, MatchesBruteForceBinning) {
  const auto c = random_cloud(1000, 0.0, 10.0, 7);
  const auto g = voxelize(c, 1.0, cube(0, 10));
  std::set<Index3> oracle;
  for (const auto& p : c.points)
    if ((p.array() >= 0).all() && (p.array() < 10).all())
      oracle.insert({int(std::floor(p.x())), int(std::floor(p.y())), int(std::floor(p.z()))});
  std::set<Index3> got;
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 10; ++y)
      for (int z = 0; z < 10; ++z)
        if (g.occupied({x, y, z})) got.insert({x, y, z});
  EXPECT_EQ(got, oracle);
}

TEST(Voxelize, HalfOpenBoundariesAndOutsidePoints) {
  PointCloud c;
  c.push_back(Vec3(0.5, 0.0, 0.0));   // lands in voxel 1 on x
  c.push_back(Vec3(1.0, 0.2, 0.2));   // on the far face: outside
  c.push_back(Vec3(-0.01, 0.2, 0.2)); // below the origin: outside
  const auto g = voxelize(c, 0.5, cube(0, 1));
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_TRUE(g.occupied({1, 0, 0}));
}

TEST(Voxelize, DuplicatePointsDoNotChangeOccupancy) {
  auto c = random_cloud(300, -5.0, 5.0, 11);
  const auto base = voxelize(c, 0.7, cube(-5, 5));
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) c.push_back(c.points[rng() % 300]);
  EXPECT_EQ(voxelize(c, 0.7, cube(-5, 5)).occupancy(), base.occupancy());
}

TEST(Voxelize, RejectsBadArguments) {
  PointCloud c;
  EXPECT_THROW(voxelize(c, 0.0, cube(0, 1)), Error);
  EXPECT_THROW(voxelize(c, -1.0, cube(0, 1)), Error);
  EXPECT_THROW(voxelize(c, 0.5, SearchArea{Vec3(0, 0, 0), Vec3(1, 1, 0)}), Error);
}

TEST(Voxelize, ProductionDefaultVoxelIsHalfMeter) {
  // 50 cm voxels for overlap checking and grounding.
  EXPECT_DOUBLE_EQ(VgiConfig{}.voxel_size, 0.5);
}

TEST(BoundingExtent, DegenerateAndTwoPointBoxes) {
  PointCloud one;
  one.push_back(Vec3(3, -2, 1));
  EXPECT_EQ(bounding_extent(one), Vec3::Zero());
  PointCloud two;
  two.push_back(Vec3(0, 0, 0));
  two.push_back(Vec3(1, 2, 3));
  EXPECT_EQ(bounding_extent(two), Vec3(1, 2, 3));
  EXPECT_THROW(bounding_extent(PointCloud{}), Error);
}

TEST(BoundingExtent, PartitionAndPermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto all = random_cloud(50 + rng() % 50, -20, 20, rng());
    const Vec3 whole = bounding_extent(all);
    const std::size_t cut = rng() % all.size();
    std::vector<PointCloud> parts(2);
    for (std::size_t i = 0; i < all.size(); ++i) parts[i < cut].push_back(all.points[i]);
    if (parts[0].empty()) parts.erase(parts.begin());
    EXPECT_EQ(bounding_extent(parts), whole);
    std::shuffle(all.points.begin(), all.points.end(), rng);
    EXPECT_EQ(bounding_extent(all), whole);
  }
}

TEST(RangeView, ForwardPointLandsInImageCenter) {
  RangeImageConfig cfg;
  cfg.height = 64;
  cfg.width = 2048;
  cfg.fov_up = 0.2;
  cfg.fov_down = -0.2;
  PointCloud c;
  c.push_back(Vec3(10, 0, 0));
  const auto proj = project_to_range_view(c, cfg);
  EXPECT_EQ(proj.pixels[0], (Pixel{1024, 32}));
  EXPECT_EQ(proj.image.pixel_point[proj.image.at({1024, 32})], 0u);
  EXPECT_DOUBLE_EQ(proj.image.pixel_range[proj.image.at({1024, 32})], 10.0);
}

TEST(RangeView, TopRowIsFovUpForAsymmetricFov) {
  RangeImageConfig cfg;  // +3 / -25 degrees
  const double pitch = cfg.fov_up - 1e-6;
  PointCloud c;
  c.push_back(Vec3(std::cos(pitch), 0, std::sin(pitch)) * 20.0);
  c.push_back(Vec3(std::cos(cfg.fov_down + 1e-6), 0, std::sin(cfg.fov_down + 1e-6)) * 20.0);
  const auto proj = project_to_range_view(c, cfg);
  EXPECT_EQ(proj.pixels[0].v, 0);
  EXPECT_EQ(proj.pixels[1].v, cfg.height - 1);
}

TEST(RangeView, OutOfFovPointsClampToBorder) {
  RangeImageConfig cfg;
  PointCloud c;
  c.push_back(Vec3(1, 0, 5));    // far above fov_up
  c.push_back(Vec3(1, 0, -5));   // far below fov_down
  c.push_back(Vec3(-1, -1e-12, 0));  // azimuth just under -pi
  const auto proj = project_to_range_view(c, cfg);
  EXPECT_EQ(proj.pixels[0].v, 0);
  EXPECT_EQ(proj.pixels[1].v, cfg.height - 1);
  EXPECT_GE(proj.pixels[2].u, 0);
  EXPECT_LT(proj.pixels[2].u, cfg.width);
}

TEST(RangeView, NearerPointWinsSharedPixel) {
  RangeImageConfig cfg;
  PointCloud c;
  c.push_back(Vec3(7, 0, 0));
  c.push_back(Vec3(5, 0, 0));
  c.push_back(Vec3(5, 0, 0));  // tie with index 1: lowest index wins
  const auto proj = project_to_range_view(c, cfg);
  EXPECT_EQ(proj.image.pixel_point[proj.image.at(proj.pixels[0])], 1u);
}

TEST(RangeView, MatchesBruteForcePerPixelMinimum) {
  RangeImageConfig cfg;
  cfg.height = 32;
  cfg.width = 256;
  auto c = random_cloud(10000, -30, 30, 99);
  // Duplicates exercise the tie rule.
  for (int k = 0; k < 500; ++k) c.push_back(c.points[k * 7]);
  const auto proj = project_to_range_view(c, cfg);

  std::map<std::pair<int, int>, std::size_t> oracle;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    const double yaw = std::atan2(p.y(), p.x());
    const double pitch = std::asin(p.z() / p.norm());
    const double fov = std::abs(cfg.fov_up) + std::abs(cfg.fov_down);
    int u = int(std::floor(0.5 * (1 - yaw / std::numbers::pi) * cfg.width));
    int v = int(std::floor((1 - (pitch + std::abs(cfg.fov_down)) / fov) * cfg.height));
    u = std::clamp(u, 0, cfg.width - 1);
    v = std::clamp(v, 0, cfg.height - 1);
    ASSERT_EQ(proj.pixels[i], (Pixel{u, v}));
    auto [it, fresh] = oracle.emplace(std::make_pair(v, u), i);
    if (!fresh && c.points[i].norm() < c.points[it->second].norm()) it->second = i;
  }
  std::size_t set = 0;
  for (int v = 0; v < cfg.height; ++v)
    for (int u = 0; u < cfg.width; ++u) {
      const auto& got = proj.image.pixel_point[proj.image.at({u, v})];
      auto it = oracle.find({v, u});
      ASSERT_EQ(got.has_value(), it != oracle.end());
      if (!got) continue;
      ++set;
      EXPECT_EQ(*got, it->second);
      EXPECT_EQ(proj.image.pixel_range[proj.image.at({u, v})], c.points[*got].norm());
    }
  EXPECT_EQ(set, oracle.size());
}

TEST(RangeView, EmptyCloudAndInvalidFov) {
  RangeImageConfig cfg;
  const auto proj = project_to_range_view(PointCloud{}, cfg);
  EXPECT_TRUE(proj.pixels.empty());
  for (const auto& p : proj.image.pixel_point) EXPECT_FALSE(p);
  cfg.fov_up = 0;
  cfg.fov_down = 0;
  EXPECT_THROW(project_to_range_view(PointCloud{}, cfg), Error);
}

TEST(ScanIo, EmptyAndSinglePointFiles) {
  const auto dir = temp_dir("scan_io");
  io::write_file(dir / "empty.bin", nullptr, 0);
  EXPECT_EQ(io::load_scan(dir / "empty.bin").size(), 0u);

  const float raw[4] = {1.0f, 2.0f, 3.0f, 0.5f};
  io::write_file(dir / "one.bin", raw, sizeof raw);
  const auto c = io::load_scan(dir / "one.bin");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.points[0], Vec3(1, 2, 3));
  EXPECT_EQ(c.intensity[0], 0.5f);
}

TEST(ScanIo, RoundTripIsBitExact) {
  const auto dir = temp_dir("scan_roundtrip");
  const auto c = random_cloud(100, -50, 50, 1234);
  io::save_scan(c, dir / "a.bin");
  const auto back = io::load_scan(dir / "a.bin");
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.points[i], c.points[i]);
    EXPECT_EQ(back.intensity[i], c.intensity[i]);
  }
  io::save_scan(back, dir / "b.bin");
  EXPECT_EQ(io::read_file(dir / "a.bin"), io::read_file(dir / "b.bin"));
}

TEST(ScanIo, TruncatedAndMissingFiles) {
  const auto dir = temp_dir("scan_bad");
  const char junk[10] = {};
  io::write_file(dir / "short.bin", junk, sizeof junk);
  try {
    io::load_scan(dir / "short.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
  }
  try {
    io::load_scan(dir / "nope.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(LabelIo, MaskingZerosAndRoundTrip) {
  const auto dir = temp_dir("labels");
  const std::uint32_t zeros[3] = {0, 0, 0};
  io::write_file(dir / "z.label", zeros, sizeof zeros);
  EXPECT_EQ(io::load_labels(dir / "z.label", 20).labels, (std::vector<std::uint32_t>{0, 0, 0}));

  const std::uint32_t inst = 0x00010005;
  io::write_file(dir / "i.label", &inst, sizeof inst);
  EXPECT_EQ(io::load_labels(dir / "i.label", 20).labels[0], 5u);

  std::mt19937_64 rng(8);
  LabelArray l{{}, 300};
  for (int i = 0; i < 500; ++i) l.labels.push_back(rng() % 300);
  io::save_labels(l, dir / "r.label");
  EXPECT_EQ(io::load_labels(dir / "r.label", 300).labels, l.labels);

  EXPECT_THROW(io::load_labels(dir / "r.label", 10), Error);
}

TEST(LabelIo, PairingCountMismatchIsFlagged) {
  PointCloud c;
  c.push_back(Vec3(1, 1, 1));
  LabelArray l{{1, 2}, 5};
  EXPECT_THROW(io::check_paired(c, l, "pair"), Error);
}

TEST(TensorIo, RoundTripAndHeaderChecks) {
  const auto dir = temp_dir("tensor");
  io::Tensor<float> t{{2, 3}, {1, 2, 3, 4, 5, 6}};
  io::save_tensor(t, dir / "t.tensor");
  const auto back = io::load_tensor<float>(dir / "t.tensor");
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.data, t.data);
  const auto raw = io::read_file(dir / "t.tensor");
  EXPECT_EQ(raw.size(), 16u + 8u + 24u);
  EXPECT_EQ(std::string(raw.begin(), raw.begin() + 4), "PCT1");
  EXPECT_THROW(io::load_tensor<std::uint16_t>(dir / "t.tensor"), Error);

  io::Tensor<std::uint16_t> m{{2, 2}, {0, 1, 1, 65535}};
  io::save_tensor(m, dir / "m.tensor");
  EXPECT_EQ(io::load_tensor<std::uint16_t>(dir / "m.tensor").data, m.data);
}
