// SPDX-License-Identifier: Apache-2.0
#pragma once

// Batch commands behind the `pcaug` CLI. Each takes resolved paths and a
// validated config, writes its outputs, and prints a report as `key value`
// or `key = value` lines.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pcaug/config.hpp"
#include "pcaug/ground.hpp"
#include "pcaug/insertion.hpp"
#include "pcaug/io.hpp"
#include "pcaug/losses.hpp"
#include "pcaug/object_pool.hpp"
#include "pcaug/range_view.hpp"

namespace pcaug::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitValidation = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kValidation: return kExitValidation;
    case ErrorKind::kInvalidArgument: return kExitValidation;
  }
  return kExitUsage;
}

/// Files in `dir` with extension `ext`, sorted by name.
inline std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : threads) t.join();
}

// ---- pool build -------------------------------------------------------------

struct PoolBuildReport {
  std::size_t scans = 0;
  std::vector<fs::path> unpaired;
  std::map<std::uint32_t, std::size_t> counts;
  std::size_t instances = 0;
  std::size_t warnings = 0;
};

/// Scan/label pairs under `src`: either `velodyne/*.bin` + `labels/*.label`
/// or both kinds side by side.
inline std::vector<std::pair<fs::path, fs::path>> find_pairs(const fs::path& src, std::vector<fs::path>& unpaired) {
  const bool kitti = fs::is_directory(src / "velodyne");
  const fs::path scan_dir = kitti ? src / "velodyne" : src;
  const fs::path label_dir = kitti ? src / "labels" : src;
  const auto scans = list_files(scan_dir, ".bin");
  const auto labels = fs::is_directory(label_dir) ? list_files(label_dir, ".label") : std::vector<fs::path>{};
  std::vector<std::pair<fs::path, fs::path>> pairs;
  std::set<std::string> matched;
  for (const auto& s : scans) {
    const auto l = label_dir / (s.stem().string() + ".label");
    if (fs::exists(l)) {
      pairs.emplace_back(s, l);
      matched.insert(s.stem().string());
    } else {
      unpaired.push_back(s);
    }
  }
  for (const auto& l : labels)
    if (!matched.count(l.stem().string())) unpaired.push_back(l);
  return pairs;
}

inline PoolBuildReport cmd_pool_build(const fs::path& src_dir, const fs::path& out_dir, const ToolkitConfig& cfg,
                                      std::size_t workers, std::ostream& report) {
  cfg.validate();
  PoolBuildReport rep;
  const auto pairs = find_pairs(src_dir, rep.unpaired);
  rep.scans = pairs.size();
  std::vector<std::vector<ObjectInstance>> per_scan(pairs.size());
  std::vector<std::string> errors(pairs.size());
  const auto classes = cfg.class_ids();
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    try {
      const auto scan = io::load_scan(pairs[i].first);
      const auto labels = io::load_labels(pairs[i].second, cfg.num_classes);
      io::check_paired(scan, labels, pairs[i].first.string());
      per_scan[i] = extract_instances(scan, labels, classes, cfg.extraction, pairs[i].first.stem().string());
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  ObjectPool pool;
  pool.per_class_cap = cfg.per_class_cap;
  for (auto& v : per_scan)
    for (auto& inst : v) pool.instances.push_back(std::move(inst));
  pool.canonicalize();
  pool.enforce_cap();
  pool_save(pool, out_dir);

  rep.instances = pool.instances.size();
  rep.counts = pool.class_counts();
  for (const auto& u : rep.unpaired) report << "warning unpaired " << u.string() << "\n";
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      report << "warning skipped " << pairs[i].first.string() << ": " << errors[i] << "\n";
      ++rep.warnings;
    }
  rep.warnings += rep.unpaired.size();
  if (pool.instances.empty()) {
    report << "warning empty pool\n";
    ++rep.warnings;
  }
  report << "scans " << rep.scans << "\n";
  report << "instances " << rep.instances << "\n";
  for (auto id : classes) {
    auto it = rep.counts.find(id);
    report << "count " << cfg.class_name(id) << ":" << (it == rep.counts.end() ? 0 : it->second) << "\n";
  }
  report << "warnings " << rep.warnings << "\n";
  return rep;
}

// ---- augment ---------------------------------------------------------------

struct AugmentReport {
  std::size_t scans = 0;
  std::size_t inserted = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

struct AugmentOptions {
  std::size_t workers = 1;
  std::optional<fs::path> ground_dir;  // <stem>.ground files to ingest instead of detecting
};

inline AugmentReport cmd_augment(const fs::path& scan_dir, const fs::path& pseudo_label_dir, const fs::path& pool_dir,
                                 const fs::path& out_dir, const ToolkitConfig& cfg, const AugmentOptions& opts,
                                 std::ostream& report) {
  cfg.validate();
  const auto scans = list_files(scan_dir, ".bin");
  const ObjectPool pool = pool_load(pool_dir, cfg.per_class_cap);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + out_dir.string());

  std::vector<std::string> log(scans.size());
  std::vector<int> status(scans.size(), 0);  // 1 inserted, 2 skipped, 3 failed
  parallel_for(scans.size(), opts.workers, [&](std::size_t i) {
    const auto& path = scans[i];
    const std::string name = path.filename().string();
    const std::string stem = path.stem().string();
    std::ostringstream line;
    line << name;
    try {
      const auto scan = io::load_scan(path);
      const auto labels = io::load_labels(pseudo_label_dir / (stem + ".label"), cfg.num_classes);
      io::check_paired(scan, labels, name);
      std::optional<GroundLabeling> ground;
      if (opts.ground_dir) ground = ingest_ground(*opts.ground_dir / (stem + ".ground"), scan);
      const std::uint64_t seed = derive_seed(cfg.seed, name);
      const auto aug = vgi_insert(scan, labels, pool, cfg.vgi, seed, ground ? &*ground : nullptr);
      io::save_scan(aug.points, out_dir / (stem + ".bin"));
      io::save_labels(aug.labels, out_dir / (stem + ".label"));
      io::save_flags(aug.inserted_mask, out_dir / (stem + ".mask"));
      if (aug.skipped) {
        line << "\tskipped\t" << aug.skip_reason;
        status[i] = 2;
      } else {
        line << "\tinserted";
        for (const auto& r : aug.insertions) {
          line << "\t" << cfg.class_name(r.class_id) << "|" << (r.source_id.empty() ? "-" : r.source_id) << "#"
               << r.source_index << "|voxel=" << r.location.x << "," << r.location.y << "," << r.location.z
               << "|target=" << pcaug::detail::format_double(r.target.x()) << "," << pcaug::detail::format_double(r.target.y())
               << "," << pcaug::detail::format_double(r.target.z()) << "|shift=" << pcaug::detail::format_double(r.altitude_shift)
               << "|points=" << r.points_retained << "/" << r.points_inserted;
        }
        status[i] = 1;
      }
    } catch (const Error& e) {
      line << "\terror\t" << e.what();
      status[i] = 3;
    }
    log[i] = line.str();
  });

  std::string text;
  for (const auto& l : log) text += l + "\n";
  io::write_file(out_dir / "provenance.log", text.data(), text.size());

  AugmentReport rep;
  rep.scans = scans.size();
  for (int s : status) {
    rep.inserted += s == 1;
    rep.skipped += s == 2;
    rep.failed += s == 3;
  }
  for (std::size_t i = 0; i < scans.size(); ++i)
    if (status[i] == 3) report << "error " << log[i] << "\n";
  report << "scans " << rep.scans << "\ninserted " << rep.inserted << "\nskipped " << rep.skipped << "\nfailed "
         << rep.failed << "\n";
  return rep;
}

// ---- ground detect ----------------------------------------------------------

/// Detects ground for one scan file or every scan in a directory and writes
/// `<stem>.ground` byte files.
inline std::size_t cmd_ground_detect(const fs::path& input, const fs::path& output, const ToolkitConfig& cfg,
                                     std::size_t workers, std::ostream& report) {
  cfg.validate();
  std::vector<fs::path> scans;
  std::vector<fs::path> outs;
  if (fs::is_directory(input)) {
    scans = list_files(input, ".bin");
    std::error_code ec;
    fs::create_directories(output, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create " + output.string());
    for (const auto& s : scans) outs.push_back(output / (s.stem().string() + ".ground"));
  } else {
    scans.push_back(input);
    outs.push_back(output);
  }
  std::vector<std::size_t> counts(scans.size()), sizes(scans.size());
  std::vector<std::string> errors(scans.size());
  parallel_for(scans.size(), workers, [&](std::size_t i) {
    try {
      const auto scan = io::load_scan(scans[i]);
      const auto g = detect_ground(scan, cfg.vgi.ground, derive_seed(cfg.seed, scans[i].filename().string()));
      save_ground(g, outs[i]);
      counts[i] = g.ground_count();
      sizes[i] = scan.size();
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  std::size_t failed = 0;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    if (!errors[i].empty()) {
      report << "error " << scans[i].string() << ": " << errors[i] << "\n";
      ++failed;
    } else {
      report << "ground " << scans[i].filename().string() << " " << counts[i] << "/" << sizes[i] << "\n";
    }
  }
  return failed;
}

// ---- losses eval -------------------------------------------------------------

struct LossEvalReport {
  losses::LossComponents components;
  std::map<std::string, bool> present;
  double total = 0.0;
};

namespace detail {

inline losses::PointPredictions load_point_predictions(const fs::path& path, losses::Role role) {
  const auto t = io::load_tensor<float>(path);
  if (t.dims.size() != 2) fail(ErrorKind::kValidation, path.string() + ": expected an N x C tensor");
  losses::PointPredictions p{t.dims[0], static_cast<int>(t.dims[1]), {t.data.begin(), t.data.end()}, role};
  try {
    losses::check_distributions(p.probs, p.classes, path.string().c_str(), 1e-5);
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, e.what());
  }
  return p;
}

}  // namespace detail

/// Evaluates every loss group whose files are present in `dir`:
///   src_/trg_ : pred_2d, pred_3d, aux_2d, aux_3d (.tensor, N x C) + labels.label
///   vce_      : pred_3d.tensor + labels.label
///   sam_      : pred_2d.tensor (H x W x C float32) + masks.tensor (H x W uint16)
inline LossEvalReport cmd_losses_eval(const fs::path& dir, const ToolkitConfig& cfg, std::ostream& report) {
  cfg.validate();
  if (!fs::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  using losses::Role;
  LossEvalReport rep;

  auto group = [&](const std::string& name, const std::vector<std::string>& files) {
    std::size_t found = 0;
    for (const auto& f : files) found += fs::exists(dir / f);
    if (found == 0) return false;
    for (const auto& f : files)
      if (!fs::exists(dir / f)) fail(ErrorKind::kIo, "losses eval: missing tensor " + (dir / f).string());
    rep.present[name] = true;
    return true;
  };
  auto labels_for = [&](const std::string& f, const losses::PointPredictions& p) {
    auto l = io::load_labels(dir / f, static_cast<std::uint32_t>(p.classes));
    if (l.size() != p.points) fail(ErrorKind::kValidation, f + ": label count does not match predictions");
    return l;
  };

  for (const std::string domain : {"src", "trg"}) {
    const std::vector<std::string> files{domain + "_pred_2d.tensor", domain + "_pred_3d.tensor",
                                         domain + "_aux_2d.tensor", domain + "_aux_3d.tensor",
                                         domain + "_labels.label"};
    if (!group(domain, files)) continue;
    const auto p2d = detail::load_point_predictions(dir / files[0], Role::kMain2D);
    const auto p3d = detail::load_point_predictions(dir / files[1], Role::kMain3D);
    const auto a2d = detail::load_point_predictions(dir / files[2], Role::kAux2D);
    const auto a3d = detail::load_point_predictions(dir / files[3], Role::kAux3D);
    const auto labels = labels_for(files[4], p2d);
    const double ce = losses::cross_entropy_loss(p2d, labels).value + losses::cross_entropy_loss(p3d, labels).value;
    const double xm = losses::cross_modal_kl_loss(p3d, a2d).value + losses::cross_modal_kl_loss(p2d, a3d).value;
    (domain == "src" ? rep.components.source_ce : rep.components.target_ce) = ce;
    (domain == "src" ? rep.components.source_xm : rep.components.target_xm) = xm;
  }
  if (group("vce", {"vce_pred_3d.tensor", "vce_labels.label"})) {
    const auto p = detail::load_point_predictions(dir / "vce_pred_3d.tensor", Role::kMain3D);
    rep.components.target_vce = losses::cross_entropy_loss(p, labels_for("vce_labels.label", p)).value;
  }
  if (group("sam", {"sam_pred_2d.tensor", "sam_masks.tensor"})) {
    const auto t = io::load_tensor<float>(dir / "sam_pred_2d.tensor");
    const auto m = io::load_tensor<std::uint16_t>(dir / "sam_masks.tensor");
    if (t.dims.size() != 3 || m.dims.size() != 2 || t.dims[0] != m.dims[0] || t.dims[1] != m.dims[1])
      fail(ErrorKind::kValidation, "losses eval: sam tensors must be H x W x C and H x W");
    losses::PredictionMap pred{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                               {t.data.begin(), t.data.end()}};
    try {
      losses::check_distributions(pred.probs, pred.classes, "sam_pred_2d", 1e-5);
    } catch (const Error& e) {
      fail(ErrorKind::kValidation, e.what());
    }
    const auto masks = losses::mask_filter(pred.height, pred.width, m.data, cfg.sam_area_cap);
    rep.components.target_sc = losses::sam_consistency_loss(pred, masks, cfg.entropy_sign).value;
  }
  if (rep.present.empty()) fail(ErrorKind::kIo, "losses eval: no loss tensors found in " + dir.string());
  rep.total = losses::total_loss(rep.components, cfg.weights);

  auto line = [&](const char* key, double v, const char* group_name) {
    report << key << " = " << pcaug::detail::format_double(v);
    if (!rep.present.count(group_name)) report << "  # absent";
    report << "\n";
  };
  line("source_ce", rep.components.source_ce, "src");
  line("source_xm", rep.components.source_xm, "src");
  line("target_ce", rep.components.target_ce, "trg");
  line("target_xm", rep.components.target_xm, "trg");
  line("target_vce", rep.components.target_vce, "vce");
  line("target_sc", rep.components.target_sc, "sam");
  report << "total = " << pcaug::detail::format_double(rep.total) << "\n";
  return rep;
}

// ---- rv render ----------------------------------------------------------------

/// 8-bit image: 255 * (1 - range / max_range) for the winning point of each
/// pixel, 0 for empty pixels.
inline std::vector<std::uint8_t> render_range_image(const PointCloud& cloud, const RangeImageConfig& cfg) {
  const auto proj = project_to_range_view(cloud, cfg);
  std::vector<std::uint8_t> px(proj.image.pixel_point.size(), 0);
  for (std::size_t k = 0; k < px.size(); ++k) {
    if (!proj.image.pixel_point[k]) continue;
    const double t = std::clamp(proj.image.pixel_range[k] / cfg.max_range, 0.0, 1.0);
    px[k] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
  }
  return px;
}

inline void cmd_rv_render(const fs::path& scan_path, const ToolkitConfig& cfg, const fs::path& out_image,
                          std::ostream& report) {
  cfg.validate();
  const auto cloud = io::load_scan(scan_path);
  const auto& rv = cfg.vgi.range_view;
  const auto px = render_range_image(cloud, rv);
  io::save_pgm(px, rv.width, rv.height, out_image);
  report << "image " << out_image.string() << " " << rv.width << "x" << rv.height << "\n";
  report << "lit_pixels " << std::count_if(px.begin(), px.end(), [](auto v) { return v > 0; }) << "\n";
}

// ---- benchmark ---------------------------------------------------------------

struct BenchmarkReport {
  std::size_t runs = 0;
  double mean_points = 0.0;
  std::map<std::string, std::vector<double>> samples;  // seconds, per stage and "end_to_end"
  std::size_t skipped = 0;

  static double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  static double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
};

inline const std::vector<std::string>& benchmark_stages() {
  static const std::vector<std::string> stages{"voxelize", "overlap", "ground", "place", "style_translate",
                                               "stage_sum", "end_to_end"};
  return stages;
}

/// Times vgi_insert single-threaded over the scans in `scan_dir`, cycling
/// through them until at least `min_runs` runs are measured.
inline BenchmarkReport cmd_benchmark(const fs::path& scan_dir, const fs::path& pool_dir, const ToolkitConfig& cfg,
                                     std::size_t min_runs, std::ostream& report) {
  cfg.validate();
  const auto scans = list_files(scan_dir, ".bin");
  if (scans.empty()) fail(ErrorKind::kValidation, "benchmark: no scans in " + scan_dir.string());
  const ObjectPool pool = pool_load(pool_dir, cfg.per_class_cap);
  BenchmarkReport rep;
  rep.runs = std::max(min_runs, scans.size());
  double points = 0.0;
  for (std::size_t r = 0; r < rep.runs; ++r) {
    const auto& path = scans[r % scans.size()];
    const auto scan = io::load_scan(path);
    LabelArray labels;
    const auto label_path = path.parent_path() / (path.stem().string() + ".label");
    if (fs::exists(label_path)) {
      labels = io::load_labels(label_path, cfg.num_classes);
    } else {
      labels.num_classes = cfg.num_classes;
      labels.labels.assign(scan.size(), 0);
    }
    StageTimings t;
    const auto start = std::chrono::steady_clock::now();
    const auto aug = vgi_insert(scan, labels, pool, cfg.vgi, derive_seed(cfg.seed, r), nullptr, &t);
    const double e2e = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.skipped += aug.skipped;
    points += static_cast<double>(scan.size());
    rep.samples["voxelize"].push_back(t.voxelize);
    rep.samples["overlap"].push_back(t.overlap);
    rep.samples["ground"].push_back(t.ground);
    rep.samples["place"].push_back(t.place);
    rep.samples["style_translate"].push_back(t.style_translate);
    rep.samples["stage_sum"].push_back(t.total());
    rep.samples["end_to_end"].push_back(e2e);
  }
  rep.mean_points = points / static_cast<double>(rep.runs);
  report << "runs " << rep.runs << "\n";
  report << "skipped " << rep.skipped << "\n";
  report << "mean_points " << pcaug::detail::format_double(rep.mean_points) << "\n";
  for (const auto& stage : benchmark_stages()) {
    const auto& v = rep.samples[stage];
    report << stage << ".mean_s " << pcaug::detail::format_double(BenchmarkReport::mean(v)) << "\n";
    report << stage << ".median_s " << pcaug::detail::format_double(BenchmarkReport::median(v)) << "\n";
  }
  return rep;
}

}  // namespace pcaug::cli
