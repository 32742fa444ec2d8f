// Copyright 2026 The retrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "retrack/common.hpp"
#include "retrack/image.hpp"

namespace retrack::imgmath {

/// Per-pixel probability field emitted by the keypoint detector; values in [0,1].
using KeypointProbMap = ImageD;

/// Curve-enhancement parameters: per-pixel adjustment field and iteration count.
struct EnhanceParams {
  ImageD alpha;
  int iterations = 2;
};

struct LossParams {
  double margin = 0.8;        // triplet margin m
  double gamma = 0.1;         // keypoint threshold
  double temperature = 0.1;   // sigmoid temperature t
  double headroom = 1000.0;   // target extra keypoints h
  double epsilon = 10.0;      // inlier radius in pixels
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ============================================================================
// Enhancement curve
// ============================================================================

/// One enhancement iteration: E(I; alpha) = I + alpha * I * (1 - I), applied
/// per pixel. Maps [0,1] into [0,1] for |alpha| <= 1.
inline ImageD enhance_step(const ImageD& intensity, const ImageD& alpha) {
  if (!intensity.same_shape(alpha)) throw ShapeError("enhance_step: alpha shape mismatch");
  for (const double a : alpha.pixels()) {
    if (!(std::abs(a) <= 1.0)) throw ParameterError("enhance_step: |alpha| must be <= 1");
  }
  for (const double v : intensity.pixels()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("enhance_step: intensity outside [0,1]");
  }
  ImageD out(intensity.width(), intensity.height());
  for (size_t i = 0; i < intensity.size(); ++i) {
    const double v = intensity[i];
    out[i] = v + alpha[i] * v * (1.0 - v);
  }
  return out;
}

/// N composed applications of enhance_step with the same alpha field, the
/// first iteration starting from the raw image.
inline ImageD enhance(const ImageD& intensity, const EnhanceParams& params) {
  if (params.iterations < 1) throw ParameterError("enhance: iterations must be >= 1");
  ImageD cur = enhance_step(intensity, params.alpha);
  for (int n = 1; n < params.iterations; ++n) cur = enhance_step(cur, params.alpha);
  return cur;
}

// ============================================================================
// Keypoint-count losses
// ============================================================================

/// Soft count of detectable keypoints: sum over pixels of
/// sigmoid((D_i - gamma) / t). Monotone in every pixel, bounded by [0, P].
inline double soft_keypoint_count(const KeypointProbMap& prob, double gamma, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("soft_keypoint_count: temperature must be > 0");
  double sum = 0.0;
  for (const double d : prob.pixels()) sum += sigmoid((d - gamma) / temperature);
  return sum;
}

/// Hinge form of the keypoint-preserving loss given a frozen raw-branch
/// count. This is the differentiable view: the raw count enters as a plain
/// constant, so gradients with respect to raw-map pixels are identically zero.
inline double keypoint_preserve_loss_frozen_raw(const KeypointProbMap& enhanced_map,
                                                double raw_count, const LossParams& lp) {
  const double enhanced_count = soft_keypoint_count(enhanced_map, lp.gamma, lp.temperature);
  return std::max(0.0, lp.headroom - (enhanced_count - raw_count));
}

/// Keypoint-preserving and boosting loss:
/// max(0, h - [count(enhanced) - count(raw)]), raw branch held constant for
/// differentiation purposes.
inline double keypoint_preserve_loss(const KeypointProbMap& enhanced_map,
                                     const KeypointProbMap& raw_map, const LossParams& lp) {
  if (!enhanced_map.same_shape(raw_map)) throw ShapeError("keypoint_preserve_loss: map shape mismatch");
  const double raw_count = soft_keypoint_count(raw_map, lp.gamma, lp.temperature);
  return keypoint_preserve_loss_frozen_raw(enhanced_map, raw_count, lp);
}

// ============================================================================
// Descriptor triplet loss
// ============================================================================

/// Sum over keypoints of max(0, m + phi_pos - (phi_neg_rand + phi_neg_hard)/2),
/// with phi the Euclidean distance between unit-norm descriptors. Negative
/// sampling policy is the caller's concern.
inline double triplet_descriptor_loss(std::span<const Descriptor> anchors,
                                      std::span<const Descriptor> positives,
                                      std::span<const Descriptor> negatives_rand,
                                      std::span<const Descriptor> negatives_hard, double margin) {
  const size_t n = anchors.size();
  if (positives.size() != n || negatives_rand.size() != n || negatives_hard.size() != n) {
    throw ShapeError("triplet_descriptor_loss: descriptor list lengths differ");
  }
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double phi_pos = descriptor_distance(anchors[i], positives[i]);
    const double phi_nr = descriptor_distance(anchors[i], negatives_rand[i]);
    const double phi_nh = descriptor_distance(anchors[i], negatives_hard[i]);
    loss += std::max(0.0, margin + phi_pos - 0.5 * (phi_nr + phi_nh));
  }
  return loss;
}

// ============================================================================
// Binary cross-entropy and inlier labeling
// ============================================================================

inline constexpr double kBceFloor = 1e-7;

/// Mean binary cross-entropy; scores are clamped to [kBceFloor, 1-kBceFloor]
/// so the loss stays finite.
inline double bce_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("bce_loss: length mismatch");
  if (scores.empty()) throw ParameterError("bce_loss: empty input");
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const double x = std::clamp(scores[i], kBceFloor, 1.0 - kBceFloor);
    const double y = static_cast<double>(labels[i]);
    sum += y * std::log(x) + (1.0 - y) * std::log(1.0 - x);
  }
  return -sum / static_cast<double>(scores.size());
}

/// Ground-truth inlier label: 1 iff || (k_src + M_gt) - k_tgt ||_2 < epsilon
/// (strict inequality).
inline int inlier_label(Vec2 k_src, Vec2 k_tgt, Translation2D m_gt, double epsilon) {
  const Vec2 translated{k_src.x + m_gt.dx, k_src.y + m_gt.dy};
  return (translated - k_tgt).norm() < epsilon ? 1 : 0;
}

// ============================================================================
// Finite differences
// ============================================================================

/// Central-difference gradient of a scalar function of a field, per element.
template <typename F>
ImageD finite_diff_grad(F&& f, const ImageD& x, double step) {
  if (!(step > 0.0)) throw ParameterError("finite_diff_grad: step must be > 0");
  ImageD grad(x.width(), x.height());
  ImageD probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

/// Central-difference gradient of a scalar function of a flat vector.
template <typename F>
std::vector<double> finite_diff_grad_vec(F&& f, const std::vector<double>& x, double step) {
  if (!(step > 0.0)) throw ParameterError("finite_diff_grad_vec: step must be > 0");
  std::vector<double> grad(x.size());
  std::vector<double> probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace retrack::imgmath
