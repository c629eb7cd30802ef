// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference implementations of the training losses and self-training
// utilities. Inputs are probabilities (not logits); every loss returns its
// value together with the analytic gradient with respect to its learnable input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "pcaug/point_cloud.hpp"
#include "pcaug/random.hpp"

namespace pcaug::losses {

/// Lower clamp applied to probabilities inside every logarithm.
inline constexpr double kLogEps = 1e-12;

inline double safe_log(double p) { return std::log(std::max(p, kLogEps)); }

/// Dense H x W x C class probabilities, row-major (pixel-major, class fastest).
struct PredictionMap {
  int height = 0, width = 0, classes = 0;
  std::vector<double> probs;

  double& at(int v, int u, int c) { return probs[(static_cast<std::size_t>(v) * width + u) * classes + c]; }
  double at(int v, int u, int c) const { return probs[(static_cast<std::size_t>(v) * width + u) * classes + c]; }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

enum class Role { kMain2D, kMain3D, kAux2D, kAux3D };

/// N x C class probabilities for projected points, row-major.
struct PointPredictions {
  std::size_t points = 0;
  int classes = 0;
  std::vector<double> probs;
  Role role = Role::kMain3D;

  double& at(std::size_t i, int c) { return probs[i * classes + c]; }
  double at(std::size_t i, int c) const { return probs[i * classes + c]; }
};

/// Throws unless every row of `probs` (stride `classes`) is a distribution.
inline void check_distributions(const std::vector<double>& probs, int classes, const char* what,
                                double tol = 1e-6) {
  require(classes > 0 && probs.size() % classes == 0, std::string(what) + ": shape mismatch");
  for (std::size_t r = 0; r < probs.size() / classes; ++r) {
    double s = 0.0;
    for (int c = 0; c < classes; ++c) {
      const double p = probs[r * classes + c];
      require(p >= 0.0 && std::isfinite(p), std::string(what) + ": negative or non-finite probability");
      s += p;
    }
    require(std::abs(s - 1.0) <= tol, std::string(what) + ": row does not sum to 1");
  }
}

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the differentiated input
  bool all_ignored = false;
};

// ---- SAM mask consistency --------------------------------------------------

/// Mask id per pixel (0 = unmasked) and the pixel count of every id present.
struct MaskSet {
  int height = 0, width = 0;
  std::vector<std::uint16_t> mask_id;
  std::map<std::uint16_t, std::size_t> areas;

  static MaskSet from_ids(int height, int width, std::vector<std::uint16_t> ids) {
    require(ids.size() == static_cast<std::size_t>(height) * width, "mask set: size mismatch");
    MaskSet m{height, width, std::move(ids), {}};
    for (auto id : m.mask_id)
      if (id != 0) ++m.areas[id];
    return m;
  }
};

/// Drops (relabels 0) every mask larger than cap * H * W pixels.
inline MaskSet mask_filter(int height, int width, std::vector<std::uint16_t> ids, double area_fraction_cap) {
  require(area_fraction_cap > 0.0 && area_fraction_cap <= 1.0, "mask_filter: cap must be in (0,1]");
  MaskSet raw = MaskSet::from_ids(height, width, std::move(ids));
  const double limit = area_fraction_cap * static_cast<double>(raw.mask_id.size());
  for (auto& id : raw.mask_id)
    if (id != 0 && static_cast<double>(raw.areas.at(id)) > limit * (1.0 + 1e-12)) id = 0;
  return MaskSet::from_ids(height, width, std::move(raw.mask_id));
}

enum class EntropySign {
  kEntropy,  // + H(mean) = -sum p log p, minimized at one-hot means
  kLiteral,  // + sum p log p as printed, minimized at uniform means
};

/// Mean over masks of (MSE of member predictions around the mask mean +
/// entropy of the mask mean). The MSE averages over member pixels and classes.
inline LossResult sam_consistency_loss(const PredictionMap& pred, const MaskSet& masks,
                                       EntropySign sign = EntropySign::kEntropy) {
  require(pred.height == masks.height && pred.width == masks.width, "sam_consistency_loss: shape mismatch");
  require(pred.probs.size() == pred.pixels() * pred.classes, "sam_consistency_loss: bad prediction size");
  const int C = pred.classes;
  LossResult out;
  out.grad.assign(pred.probs.size(), 0.0);
  if (masks.areas.empty()) return out;

  // Mask index lookup and per-mask class sums in one pass.
  std::map<std::uint16_t, std::size_t> slot;
  for (const auto& [id, area] : masks.areas) slot.emplace(id, slot.size());
  const std::size_t M = slot.size();
  std::vector<double> mean(M * C, 0.0);
  std::vector<std::size_t> count(M, 0);
  std::vector<std::size_t> pixel_slot(pred.pixels(), M);
  for (std::size_t px = 0; px < pred.pixels(); ++px) {
    const auto id = masks.mask_id[px];
    if (id == 0) continue;
    const std::size_t s = slot.at(id);
    pixel_slot[px] = s;
    ++count[s];
    for (int c = 0; c < C; ++c) mean[s * C + c] += pred.probs[px * C + c];
  }
  for (std::size_t s = 0; s < M; ++s)
    for (int c = 0; c < C; ++c) mean[s * C + c] /= static_cast<double>(count[s]);

  const double sgn = sign == EntropySign::kEntropy ? -1.0 : 1.0;
  std::vector<double> mse(M, 0.0);
  for (std::size_t px = 0; px < pred.pixels(); ++px) {
    const std::size_t s = pixel_slot[px];
    if (s == M) continue;
    const double norm = 1.0 / (static_cast<double>(count[s]) * C);
    for (int c = 0; c < C; ++c) {
      const double dev = pred.probs[px * C + c] - mean[s * C + c];
      mse[s] += dev * dev * norm;
      // d/dp of the entropy term goes through the mean (1/n per member pixel).
      const double d_ent = sgn * (safe_log(mean[s * C + c]) + 1.0) / static_cast<double>(count[s]);
      out.grad[px * C + c] = (2.0 * dev * norm + d_ent) / static_cast<double>(M);
    }
  }
  for (std::size_t s = 0; s < M; ++s) {
    double plogp = 0.0;
    for (int c = 0; c < C; ++c) {
      const double p = mean[s * C + c];
      if (p > 0.0) plogp += p * safe_log(p);
    }
    out.value += mse[s] + sgn * plogp;
  }
  out.value /= static_cast<double>(M);
  return out;
}

// ---- point-wise losses -----------------------------------------------------

/// Mean over non-ignored points of -log p[label]. Gradient w.r.t. preds.
inline LossResult cross_entropy_loss(const PointPredictions& preds, const LabelArray& labels,
                                     std::uint32_t ignore = kIgnoreLabel) {
  require(labels.size() == preds.points, "cross_entropy_loss: label count mismatch");
  require(preds.probs.size() == preds.points * preds.classes, "cross_entropy_loss: bad prediction size");
  LossResult out;
  out.grad.assign(preds.probs.size(), 0.0);
  std::size_t n = 0;
  for (auto l : labels.labels)
    if (l != ignore) {
      require(l < static_cast<std::uint32_t>(preds.classes), "cross_entropy_loss: label out of range");
      ++n;
    }
  if (n == 0) {
    out.all_ignored = true;
    return out;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < preds.points; ++i) {
    const auto l = labels.labels[i];
    if (l == ignore) continue;
    const double p = preds.at(i, static_cast<int>(l));
    out.value -= safe_log(p) * inv_n;
    if (p > kLogEps) out.grad[i * preds.classes + l] = -inv_n / p;
  }
  return out;
}

/// Mean over points of KL(main || aux). `main` is the fixed target; the
/// gradient is taken w.r.t. `aux`.
inline LossResult cross_modal_kl_loss(const PointPredictions& main, const PointPredictions& aux) {
  require(main.points == aux.points && main.classes == aux.classes, "cross_modal_kl_loss: shape mismatch");
  require(main.probs.size() == aux.probs.size() && main.probs.size() == main.points * main.classes,
          "cross_modal_kl_loss: bad prediction size");
  LossResult out;
  out.grad.assign(aux.probs.size(), 0.0);
  if (main.points == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(main.points);
  for (std::size_t k = 0; k < main.probs.size(); ++k) {
    const double t = main.probs[k];
    const double q = aux.probs[k];
    if (t > 0.0) out.value += t * (safe_log(t) - safe_log(q)) * inv_n;
    if (q > kLogEps) out.grad[k] = -t / q * inv_n;
  }
  return out;
}

/// Cross-modal prediction: elementwise mean of the 2D and 3D predictions.
inline PointPredictions xm_average(const PointPredictions& p2d, const PointPredictions& p3d) {
  require(p2d.points == p3d.points && p2d.classes == p3d.classes && p2d.probs.size() == p3d.probs.size(),
          "xm_average: shape mismatch");
  PointPredictions out{p2d.points, p2d.classes, std::vector<double>(p2d.probs.size()), Role::kMain3D};
  for (std::size_t k = 0; k < out.probs.size(); ++k) out.probs[k] = 0.5 * (p2d.probs[k] + p3d.probs[k]);
  return out;
}

// ---- total objective -------------------------------------------------------

struct LossComponents {
  double source_ce = 0.0;
  double source_xm = 0.0;
  double target_ce = 0.0;
  double target_xm = 0.0;
  double target_vce = 0.0;
  double target_sc = 0.0;
};

struct LossWeights {
  double xm_source = 1.0;
  double xm_target = 1.0;
  double vce_target = 0.1;
  double sc_target = 0.01;

  void validate() const {
    for (double w : {xm_source, xm_target, vce_target, sc_target})
      require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and non-negative");
  }
};

inline double total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  for (double v : {c.source_ce, c.source_xm, c.target_ce, c.target_xm, c.target_vce, c.target_sc})
    require(std::isfinite(v), "total_loss: non-finite component");
  return c.source_ce + w.xm_source * c.source_xm + c.target_ce + w.xm_target * c.target_xm +
         w.vce_target * c.target_vce + w.sc_target * c.target_sc;
}

// ---- self-training utilities ----------------------------------------------

struct EmaState {
  std::vector<double> teacher;
  double alpha = 0.999;
};

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
inline EmaState ema_update(EmaState state, const std::vector<double>& student) {
  require(state.teacher.size() == student.size(), "ema_update: dimension mismatch");
  require(state.alpha >= 0.0 && state.alpha <= 1.0, "ema_update: alpha must be in [0,1]");
  for (std::size_t i = 0; i < student.size(); ++i)
    state.teacher[i] = state.alpha * state.teacher[i] + (1.0 - state.alpha) * student[i];
  return state;
}

enum class SwapMode { kBatch, kPerPoint };

struct SwapPolicy {
  double p_xm = 0.7;
  SwapMode mode = SwapMode::kBatch;
};

/// With probability p_xm uses the cross-modal labels instead of the modal
/// ones: once for the whole batch, or independently per point.
inline LabelArray swap_pseudo_labels(const LabelArray& modal, const LabelArray& xm, const SwapPolicy& policy,
                                     std::uint64_t seed) {
  require(modal.size() == xm.size(), "swap_pseudo_labels: size mismatch");
  require(policy.p_xm >= 0.0 && policy.p_xm <= 1.0, "swap_pseudo_labels: p_xm must be in [0,1]");
  Rng rng(seed);
  if (policy.mode == SwapMode::kBatch) return uniform01(rng) < policy.p_xm ? xm : modal;
  LabelArray out = modal;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (uniform01(rng) < policy.p_xm) out.labels[i] = xm.labels[i];
  return out;
}

/// Argmax class (lowest index on ties) where the max probability reaches the
/// threshold; kIgnoreLabel elsewhere.
inline LabelArray pseudo_label_from_probs(const PointPredictions& preds, double confidence_threshold) {
  require(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, "pseudo labels: threshold must be in [0,1]");
  LabelArray out;
  out.num_classes = static_cast<std::uint32_t>(preds.classes);
  out.labels.resize(preds.points);
  for (std::size_t i = 0; i < preds.points; ++i) {
    int best = 0;
    for (int c = 1; c < preds.classes; ++c)
      if (preds.at(i, c) > preds.at(i, best)) best = c;
    out.labels[i] = preds.at(i, best) >= confidence_threshold ? static_cast<std::uint32_t>(best) : kIgnoreLabel;
  }
  return out;
}

}  // namespace pcaug::losses
