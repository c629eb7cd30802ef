// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat key-value configuration ("key = value", '#' comments) shared by all
// CLI commands. Angles are given in degrees in the file and held in radians.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcaug/insertion.hpp"
#include "pcaug/losses.hpp"
#include "pcaug/object_pool.hpp"

namespace pcaug {

struct ToolkitConfig {
  VgiConfig vgi;
  std::map<std::uint32_t, std::string> classes{{11, "Bicycle"}, {15, "Motorcycle"}, {30, "Pedestrian"}};
  std::uint32_t num_classes = 260;
  ExtractionParams extraction;
  std::size_t per_class_cap = 1000;
  losses::LossWeights weights;
  losses::EntropySign entropy_sign = losses::EntropySign::kEntropy;
  double sam_area_cap = 0.1;
  double p_xm = 0.7;
  losses::SwapMode swap_mode = losses::SwapMode::kBatch;
  double ema_alpha = 0.999;
  double pseudo_label_threshold = 0.9;
  std::uint64_t seed = 0;

  std::set<std::uint32_t> class_ids() const {
    std::set<std::uint32_t> ids;
    for (const auto& [id, name] : classes) ids.insert(id);
    return ids;
  }

  std::string class_name(std::uint32_t id) const {
    auto it = classes.find(id);
    return it == classes.end() ? std::to_string(id) : it->second;
  }

  void validate() const {
    try {
      vgi.validate();
      extraction.dbscan.validate();
      weights.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
    auto check = [](bool ok, const char* what) {
      if (!ok) fail(ErrorKind::kConfig, what);
    };
    check(!classes.empty(), "config: classes must not be empty");
    for (const auto& [id, name] : classes) check(id < num_classes, "config: class id exceeds num_classes");
    check(num_classes >= 1 && num_classes <= 0xFFFF, "config: num_classes must be in [1, 65535]");
    check(per_class_cap >= 1, "config: pool.per_class_cap must be >= 1");
    check(extraction.min_instance_points >= 1, "config: pool.min_instance_points must be >= 1");
    check(sam_area_cap > 0.0 && sam_area_cap <= 1.0, "config: loss.sam_area_cap must be in (0,1]");
    check(p_xm >= 0.0 && p_xm <= 1.0, "config: p_xm must be in [0,1]");
    check(ema_alpha >= 0.0 && ema_alpha <= 1.0, "config: ema_alpha must be in [0,1]");
    check(pseudo_label_threshold >= 0.0 && pseudo_label_threshold <= 1.0,
          "config: pseudo_label_threshold must be in [0,1]");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) fail(ErrorKind::kConfig, "config: " + key + ": not a number: '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorKind::kConfig, "config: " + key + ": not a non-negative integer: '" + v + "'");
  return out;
}

inline Vec3 to_vec3(const std::string& key, const std::string& v) {
  std::vector<double> parts;
  std::stringstream ss(v);
  for (std::string f; std::getline(ss, f, ',');) parts.push_back(to_double(key, trim(f)));
  if (parts.size() != 3) fail(ErrorKind::kConfig, "config: " + key + ": expected x,y,z");
  return {parts[0], parts[1], parts[2]};
}

inline std::map<std::uint32_t, std::string> to_classes(const std::string& key, const std::string& v) {
  std::map<std::uint32_t, std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const auto id = static_cast<std::uint32_t>(to_uint(key, trim(item.substr(0, colon))));
    out[id] = colon == std::string::npos ? std::to_string(id) : trim(item.substr(colon + 1));
  }
  return out;
}

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are a config error.
inline void apply_setting(ToolkitConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  const std::map<std::string, std::function<void(const std::string&)>> setters{
      {"voxel_size", [&](auto& v) { cfg.vgi.voxel_size = to_double(key, v); }},
      {"search_area.lo", [&](auto& v) { cfg.vgi.area.corner_lo = to_vec3(key, v); }},
      {"search_area.hi", [&](auto& v) { cfg.vgi.area.corner_hi = to_vec3(key, v); }},
      {"rv.height", [&](auto& v) { cfg.vgi.range_view.height = static_cast<int>(to_uint(key, v)); }},
      {"rv.width", [&](auto& v) { cfg.vgi.range_view.width = static_cast<int>(to_uint(key, v)); }},
      {"rv.fov_up_deg", [&](auto& v) { cfg.vgi.range_view.fov_up = deg(to_double(key, v)); }},
      {"rv.fov_down_deg", [&](auto& v) { cfg.vgi.range_view.fov_down = deg(to_double(key, v)); }},
      {"rv.max_range", [&](auto& v) { cfg.vgi.range_view.max_range = to_double(key, v); }},
      {"n_objects", [&](auto& v) { cfg.vgi.n_objects = to_uint(key, v); }},
      {"max_placement_attempts", [&](auto& v) { cfg.vgi.max_placement_attempts = to_uint(key, v); }},
      {"refine.k", [&](auto& v) { cfg.vgi.refine_neighbours = to_uint(key, v); }},
      {"refine.radius", [&](auto& v) { cfg.vgi.refine_radius = to_double(key, v); }},
      {"classes", [&](auto& v) { cfg.classes = to_classes(key, v); }},
      {"num_classes", [&](auto& v) { cfg.num_classes = static_cast<std::uint32_t>(to_uint(key, v)); }},
      {"dbscan.eps", [&](auto& v) { cfg.extraction.dbscan.eps = to_double(key, v); }},
      {"dbscan.min_pts", [&](auto& v) { cfg.extraction.dbscan.min_pts = static_cast<int>(to_uint(key, v)); }},
      {"pool.min_instance_points", [&](auto& v) { cfg.extraction.min_instance_points = to_uint(key, v); }},
      {"pool.per_class_cap", [&](auto& v) { cfg.per_class_cap = to_uint(key, v); }},
      {"ground.cell_size", [&](auto& v) { cfg.vgi.ground.cell_size = to_double(key, v); }},
      {"ground.sectors", [&](auto& v) { cfg.vgi.ground.sectors = static_cast<int>(to_uint(key, v)); }},
      {"ground.ransac_iters", [&](auto& v) { cfg.vgi.ground.ransac_iters = static_cast<int>(to_uint(key, v)); }},
      {"ground.inlier_threshold", [&](auto& v) { cfg.vgi.ground.inlier_threshold = to_double(key, v); }},
      {"ground.max_slope_deg", [&](auto& v) { cfg.vgi.ground.max_slope = deg(to_double(key, v)); }},
      {"ground.seed_height_margin", [&](auto& v) { cfg.vgi.ground.seed_height_margin = to_double(key, v); }},
      {"ground.max_relative_height", [&](auto& v) { cfg.vgi.ground.max_relative_height = to_double(key, v); }},
      {"loss.lambda_xm_source", [&](auto& v) { cfg.weights.xm_source = to_double(key, v); }},
      {"loss.lambda_xm_target", [&](auto& v) { cfg.weights.xm_target = to_double(key, v); }},
      {"loss.lambda_vce_target", [&](auto& v) { cfg.weights.vce_target = to_double(key, v); }},
      {"loss.lambda_sc_target", [&](auto& v) { cfg.weights.sc_target = to_double(key, v); }},
      {"loss.sam_area_cap", [&](auto& v) { cfg.sam_area_cap = to_double(key, v); }},
      {"loss.entropy_sign",
       [&](auto& v) {
         if (v == "entropy") cfg.entropy_sign = losses::EntropySign::kEntropy;
         else if (v == "literal") cfg.entropy_sign = losses::EntropySign::kLiteral;
         else fail(ErrorKind::kConfig, "config: loss.entropy_sign must be 'entropy' or 'literal'");
       }},
      {"p_xm", [&](auto& v) { cfg.p_xm = to_double(key, v); }},
      {"swap_mode",
       [&](auto& v) {
         if (v == "batch") cfg.swap_mode = losses::SwapMode::kBatch;
         else if (v == "point") cfg.swap_mode = losses::SwapMode::kPerPoint;
         else fail(ErrorKind::kConfig, "config: swap_mode must be 'batch' or 'point'");
       }},
      {"ema_alpha", [&](auto& v) { cfg.ema_alpha = to_double(key, v); }},
      {"pseudo_label_threshold", [&](auto& v) { cfg.pseudo_label_threshold = to_double(key, v); }},
      {"seed", [&](auto& v) { cfg.seed = to_uint(key, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) fail(ErrorKind::kConfig, "config: unknown key '" + key + "'");
  it->second(trim(value));
}

/// Parses "key=value" (as used by --set) or a config-file line.
inline void apply_assignment(ToolkitConfig& cfg, const std::string& line, const std::string& where = "--set") {
  const auto eq = line.find('=');
  if (eq == std::string::npos) fail(ErrorKind::kConfig, where + ": expected key = value");
  apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
}

inline void apply_config_text(ToolkitConfig& cfg, const std::string& text, const std::string& name = "config") {
  std::stringstream ss(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    apply_assignment(cfg, line, name + ":" + std::to_string(line_no));
  }
}

inline ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ToolkitConfig cfg;
  apply_config_text(cfg, buf.str(), path.string());
  return cfg;
}

/// The effective configuration as a loadable config file.
inline std::string dump_config(const ToolkitConfig& cfg) {
  auto num = [](double v) { return detail::format_double(v); };
  auto vec = [&](const Vec3& v) { return num(v.x()) + "," + num(v.y()) + "," + num(v.z()); };
  auto rad2deg = [&](double r) { return num(r * 180.0 / std::numbers::pi); };
  std::ostringstream o;
  o << "voxel_size = " << num(cfg.vgi.voxel_size) << "\n"
    << "search_area.lo = " << vec(cfg.vgi.area.corner_lo) << "\n"
    << "search_area.hi = " << vec(cfg.vgi.area.corner_hi) << "\n"
    << "rv.height = " << cfg.vgi.range_view.height << "\n"
    << "rv.width = " << cfg.vgi.range_view.width << "\n"
    << "rv.fov_up_deg = " << rad2deg(cfg.vgi.range_view.fov_up) << "\n"
    << "rv.fov_down_deg = " << rad2deg(cfg.vgi.range_view.fov_down) << "\n"
    << "rv.max_range = " << num(cfg.vgi.range_view.max_range) << "\n"
    << "n_objects = " << cfg.vgi.n_objects << "\n"
    << "max_placement_attempts = " << cfg.vgi.max_placement_attempts << "\n"
    << "refine.k = " << cfg.vgi.refine_neighbours << "\n"
    << "refine.radius = " << num(cfg.vgi.refine_radius) << "\n";
  o << "classes = ";
  bool first = true;
  for (const auto& [id, name] : cfg.classes) {
    o << (first ? "" : ",") << id << ":" << name;
    first = false;
  }
  o << "\n"
    << "num_classes = " << cfg.num_classes << "\n"
    << "dbscan.eps = " << num(cfg.extraction.dbscan.eps) << "\n"
    << "dbscan.min_pts = " << cfg.extraction.dbscan.min_pts << "\n"
    << "pool.min_instance_points = " << cfg.extraction.min_instance_points << "\n"
    << "pool.per_class_cap = " << cfg.per_class_cap << "\n"
    << "ground.cell_size = " << num(cfg.vgi.ground.cell_size) << "\n"
    << "ground.sectors = " << cfg.vgi.ground.sectors << "\n"
    << "ground.ransac_iters = " << cfg.vgi.ground.ransac_iters << "\n"
    << "ground.inlier_threshold = " << num(cfg.vgi.ground.inlier_threshold) << "\n"
    << "ground.max_slope_deg = " << rad2deg(cfg.vgi.ground.max_slope) << "\n"
    << "ground.seed_height_margin = " << num(cfg.vgi.ground.seed_height_margin) << "\n"
    << "ground.max_relative_height = " << num(cfg.vgi.ground.max_relative_height) << "\n"
    << "loss.lambda_xm_source = " << num(cfg.weights.xm_source) << "\n"
    << "loss.lambda_xm_target = " << num(cfg.weights.xm_target) << "\n"
    << "loss.lambda_vce_target = " << num(cfg.weights.vce_target) << "\n"
    << "loss.lambda_sc_target = " << num(cfg.weights.sc_target) << "\n"
    << "loss.sam_area_cap = " << num(cfg.sam_area_cap) << "\n"
    << "loss.entropy_sign = " << (cfg.entropy_sign == losses::EntropySign::kEntropy ? "entropy" : "literal") << "\n"
    << "p_xm = " << num(cfg.p_xm) << "\n"
    << "swap_mode = " << (cfg.swap_mode == losses::SwapMode::kBatch ? "batch" : "point") << "\n"
    << "ema_alpha = " << num(cfg.ema_alpha) << "\n"
    << "pseudo_label_threshold = " << num(cfg.pseudo_label_threshold) << "\n"
    << "seed = " << cfg.seed << "\n";
  return o.str();
}

}  // namespace pcaug
