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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "retrack/common.hpp"
#include "retrack/image.hpp"
#include "retrack/imgmath.hpp"

namespace retrack::features {

/// Detected keypoint: sub-pixel image position (origin at top-left pixel
/// center) and normalized detector response.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
};

/// Keypoints with their unit-norm descriptors for one frame.
struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  int source_id = -1;

  size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
};

struct DetectorParams {
  int nms_window = 7;
  double threshold = 0.15;
  int max_keypoints = 1024;  // keeps pathological frames bounded; 0 = unlimited
};

/// Deterministic inference-time enhancement: per-pixel
/// alpha = clamp(kappa * (0.5 - local_mean), -1, 1), applied through the
/// curve for `iterations` steps. kappa = 0 is a bitwise no-op.
struct EnhancePolicy {
  bool enabled = false;
  double kappa = 2.0;
  int iterations = 2;
  double local_mean_sigma = 8.0;
};

struct ExtractParams {
  DetectorParams detector{};
  EnhancePolicy enhance{};
};

// Descriptor layout: 16x16 patch, 4x4 cells, 8 orientation bins.
inline constexpr int kPatchSize = 16;
inline constexpr int kDescCells = 4;
inline constexpr int kDescBins = 8;
inline constexpr double kDescBorder = 10.0;  // min distance from image edge
static_assert(kDescCells * kDescCells * kDescBins == kDescriptorDim);

// ============================================================================
// Detection
// ============================================================================

/// Multi-scale difference-of-Gaussians magnitude, normalized so the frame
/// maximum is 1 (all zeros for a constant frame).
inline imgmath::KeypointProbMap response_map(const ImageD& frame) {
  if (frame.empty()) return {};
  static constexpr double kSigmas[] = {1.0, 1.6, 2.56, 4.096};
  static constexpr int kLevels = 4;

  ImageD blurred[kLevels];
  for (int i = 0; i < kLevels; ++i) blurred[i] = gaussian_blur(frame, kSigmas[i]);

  ImageD response(frame.width(), frame.height(), 0.0);
  for (int i = 0; i + 1 < kLevels; ++i) {
    for (size_t p = 0; p < response.size(); ++p) {
      const double mag = std::abs(blurred[i + 1][p] - blurred[i][p]);
      if (mag > response[p]) response[p] = mag;
    }
  }
  // Frames that are flat up to floating-point residue have no features;
  // normalizing by a denormal-scale peak would only amplify noise.
  const double peak = response.max_value();
  if (peak < 1e-9) return ImageD(frame.width(), frame.height(), 0.0);
  for (auto& v : response.pixels()) v /= peak;
  return response;
}

namespace detail {

/// Vertex offset of the parabola through (-1,fm), (0,f0), (+1,fp), clamped to
/// [-0.5, 0.5]. Returns 0 when the neighborhood is degenerate.
inline double quadratic_vertex(double fm, double f0, double fp) {
  const double denom = fm - 2.0 * f0 + fp;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
}

}  // namespace detail

/// Non-maximum suppression over an odd window: keeps local maxima at or above
/// the threshold, refines each to sub-pixel by a 3x3 quadratic fit. Plateau
/// ties go to the lower (y, x) position.
inline std::vector<Keypoint> nms_detect(const imgmath::KeypointProbMap& map,
                                        const DetectorParams& params = {}) {
  if (params.nms_window < 1 || params.nms_window % 2 == 0) {
    throw ParameterError("nms_detect: window must be odd and positive");
  }
  std::vector<Keypoint> result;
  if (map.empty()) return result;
  const int radius = params.nms_window / 2;
  const int w = map.width();
  const int h = map.height();

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = map(x, y);
      if (v < params.threshold) continue;
      bool is_peak = true;
      for (int dy = -radius; dy <= radius && is_peak; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || (dx == 0 && dy == 0)) continue;
          const double q = map(xx, yy);
          const bool earlier = (yy < y) || (yy == y && xx < x);
          if (q > v || (q == v && earlier)) {
            is_peak = false;
            break;
          }
        }
      }
      if (!is_peak) continue;

      Keypoint kp{static_cast<double>(x), static_cast<double>(y), v};
      if (x > 0 && x + 1 < w && y > 0 && y + 1 < h) {
        kp.x += detail::quadratic_vertex(map(x - 1, y), v, map(x + 1, y));
        kp.y += detail::quadratic_vertex(map(x, y - 1), v, map(x, y + 1));
      }
      result.push_back(kp);
    }
  }

  if (params.max_keypoints > 0 && static_cast<int>(result.size()) > params.max_keypoints) {
    std::stable_sort(result.begin(), result.end(),
                     [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
    result.resize(static_cast<size_t>(params.max_keypoints));
    std::sort(result.begin(), result.end(), [](const Keypoint& a, const Keypoint& b) {
      return a.y < b.y || (a.y == b.y && a.x < b.x);
    });
  }
  return result;
}

// ============================================================================
// Description
// ============================================================================

/// 128-dim descriptor of oriented-gradient histograms over a 16x16 patch
/// (4x4 cells x 8 orientations), L2-normalized. Keypoints closer than the
/// patch border to the image edge, or with a degenerate (flat) patch, are
/// dropped.
inline FeatureSet describe(const ImageD& frame, std::span<const Keypoint> keypoints) {
  FeatureSet out;
  const double half = kPatchSize / 2.0 - 0.5;  // sample offsets in [-7.5, 7.5]
  const double sigma_w = kPatchSize / 2.0;
  const double bin_scale = kDescBins / (2.0 * M_PI);

  for (const Keypoint& kp : keypoints) {
    if (kp.x < kDescBorder || kp.y < kDescBorder || kp.x > frame.width() - 1 - kDescBorder ||
        kp.y > frame.height() - 1 - kDescBorder) {
      continue;
    }
    Descriptor desc{};
    for (int py = 0; py < kPatchSize; ++py) {
      const double v = py - half;
      for (int px = 0; px < kPatchSize; ++px) {
        const double u = px - half;
        const double sx = kp.x + u;
        const double sy = kp.y + v;
        const double gx = 0.5 * (frame.sample_bilinear(sx + 1.0, sy) -
                                 frame.sample_bilinear(sx - 1.0, sy));
        const double gy = 0.5 * (frame.sample_bilinear(sx, sy + 1.0) -
                                 frame.sample_bilinear(sx, sy - 1.0));
        const double mag = std::hypot(gx, gy);
        if (mag == 0.0) continue;
        const double weight = mag * std::exp(-(u * u + v * v) / (2.0 * sigma_w * sigma_w));

        double theta = std::atan2(gy, gx);
        if (theta < 0.0) theta += 2.0 * M_PI;
        const double fbin = theta * bin_scale;
        const int b0 = static_cast<int>(fbin) % kDescBins;
        const int b1 = (b0 + 1) % kDescBins;
        const double fb = fbin - std::floor(fbin);

        const int cell_x = px / (kPatchSize / kDescCells);
        const int cell_y = py / (kPatchSize / kDescCells);
        const int base = (cell_y * kDescCells + cell_x) * kDescBins;
        desc[base + b0] += weight * (1.0 - fb);
        desc[base + b1] += weight * fb;
      }
    }

    double norm2 = 0.0;
    for (double d : desc) norm2 += d * d;
    if (norm2 < 1e-24) continue;
    double inv = 1.0 / std::sqrt(norm2);
    // Clamp large bins and renormalize (standard illumination guard).
    bool clipped = false;
    for (auto& d : desc) {
      d *= inv;
      if (d > 0.2) {
        d = 0.2;
        clipped = true;
      }
    }
    if (clipped) {
      norm2 = 0.0;
      for (double d : desc) norm2 += d * d;
      inv = 1.0 / std::sqrt(norm2);
      for (auto& d : desc) d *= inv;
    }

    out.keypoints.push_back(kp);
    out.descriptors.push_back(desc);
  }
  return out;
}

// ============================================================================
// Extraction pipeline
// ============================================================================

/// Contrast-stretch field for inference-time enhancement:
/// alpha = clamp(kappa * (0.5 - local_mean), -1, 1).
inline ImageD enhancement_alpha(const ImageD& frame, const EnhancePolicy& policy) {
  ImageD alpha = gaussian_blur(frame, policy.local_mean_sigma);
  for (auto& v : alpha.pixels()) v = std::clamp(policy.kappa * (0.5 - v), -1.0, 1.0);
  return alpha;
}

/// Debug dump: one row per keypoint with x, y, response and the descriptor.
inline void write_feature_csv(const FeatureSet& fs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_feature_csv: cannot open " + path.string());
  out << "x,y,response";
  for (int k = 0; k < kDescriptorDim; ++k) out << ",d" << k;
  out << "\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << buf;
  };
  for (size_t i = 0; i < fs.size(); ++i) {
    emit(fs.keypoints[i].x);
    out << ',';
    emit(fs.keypoints[i].y);
    out << ',';
    emit(fs.keypoints[i].response);
    for (const double d : fs.descriptors[i]) {
      out << ',';
      emit(d);
    }
    out << "\n";
  }
}

/// Full per-frame feature extraction: optional enhancement, response map,
/// NMS detection, description.
inline FeatureSet extract(const ImageD& frame, const ExtractParams& params = {}) {
  if (frame.empty()) return {};
  const ImageD* working = &frame;
  ImageD enhanced;
  if (params.enhance.enabled) {
    enhanced = imgmath::enhance(
        frame, {enhancement_alpha(frame, params.enhance), params.enhance.iterations});
    working = &enhanced;
  }
  const auto response = response_map(*working);
  const auto keypoints = nms_detect(response, params.detector);
  return describe(*working, keypoints);
}

}  // namespace retrack::features
