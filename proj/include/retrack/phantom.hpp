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
#include <optional>
#include <utility>
#include <vector>

#include "retrack/common.hpp"
#include "retrack/image.hpp"

namespace retrack::phantom {

inline constexpr int kDefaultFrameWidth = 253;
inline constexpr int kDefaultFrameHeight = 207;

/// Ground-truth wide-field retina map. Immutable after generation.
struct RetinaPhantom {
  int width = 0;
  int height = 0;
  ImageD intensity;
  uint64_t texture_seed = 0;
  double vessel_density = 0.0;

  Vec2 center() const { return {(width - 1) / 2.0, (height - 1) / 2.0}; }
};

/// Per-frame appearance degradation. Neutral parameters are a bitwise no-op.
struct AppearanceParams {
  double gamma = 1.0;
  double noise_std = 0.0;
  double blur_sigma = 0.0;
  double vignette_strength = 0.0;

  void validate() const {
    if (!(gamma > 0.0)) throw ParameterError("AppearanceParams: gamma must be > 0");
    if (noise_std < 0.0) throw ParameterError("AppearanceParams: noise_std must be >= 0");
    if (blur_sigma < 0.0) throw ParameterError("AppearanceParams: blur_sigma must be >= 0");
    if (vignette_strength < 0.0 || vignette_strength > 1.0) {
      throw ParameterError("AppearanceParams: vignette_strength must be in [0,1]");
    }
  }

  bool is_neutral() const {
    return gamma == 1.0 && noise_std == 0.0 && blur_sigma == 0.0 && vignette_strength == 0.0;
  }
};

/// One small-FoV retinal image. true_gaze is the simulation ground truth and
/// is absent when the frame is treated as unlabeled.
struct Frame {
  int width = 0;
  int height = 0;
  ImageD intensity;
  std::optional<GazeAngle> true_gaze;

  Vec2 center() const { return {(width - 1) / 2.0, (height - 1) / 2.0}; }
};

/// Frame geometry the phantom must cover: frame size plus gaze range.
struct CoverageRequirement {
  int frame_width = kDefaultFrameWidth;
  int frame_height = kDefaultFrameHeight;
  double range_deg = 5.0;
  Calibration cal{};
};

// ============================================================================
// Phantom generation
// ============================================================================

namespace detail {

inline double value_noise_octave(uint64_t seed, double x, double y, double spacing) {
  const double gx = x / spacing;
  const double gy = y / spacing;
  const auto ix = static_cast<int64_t>(std::floor(gx));
  const auto iy = static_cast<int64_t>(std::floor(gy));
  const double fx = gx - static_cast<double>(ix);
  const double fy = gy - static_cast<double>(iy);
  const double v00 = hash01(seed, ix, iy);
  const double v10 = hash01(seed, ix + 1, iy);
  const double v01 = hash01(seed, ix, iy + 1);
  const double v11 = hash01(seed, ix + 1, iy + 1);
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

inline Vec2 bezier_point(Vec2 p0, Vec2 p1, Vec2 p2, double t) {
  const double u = 1.0 - t;
  return {u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
          u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y};
}

}  // namespace detail

/// Band-limited texture field standing in for photoreceptor-scale structure:
/// three octaves of lattice value noise mapped into [0.15, 0.85].
inline ImageD texture_field(uint64_t seed, int width, int height) {
  static constexpr double kSpacing[3] = {3.0, 7.0, 17.0};
  static constexpr double kAmplitude[3] = {0.5, 0.3, 0.2};
  ImageD img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = 0.0;
      for (int o = 0; o < 3; ++o) {
        v += kAmplitude[o] *
             detail::value_noise_octave(seed + 0x51ull * (o + 1), x, y, kSpacing[o]);
      }
      img(x, y) = 0.15 + 0.70 * v;
    }
  }
  return img;
}

/// Vessel occlusion depths: dark curvilinear arcs with Gaussian cross-profile,
/// max-blended so self-crossings do not double-darken. Count scales with
/// density; density 0 stamps nothing.
inline ImageD vessel_depth_field(uint64_t seed, int width, int height, double vessel_density) {
  ImageD depth(width, height, 0.0);
  const int count =
      static_cast<int>(std::lround(vessel_density * (static_cast<double>(width) * height) / 20000.0));
  Rng rng(seed ^ 0x7E55E1C0DEull);  // vessel stream, independent of the texture hash
  for (int v = 0; v < count; ++v) {
    const double min_span = 0.35 * std::min(width, height);
    Vec2 p0, p2;
    do {
      p0 = {rng.uniform(0.0, width - 1.0), rng.uniform(0.0, height - 1.0)};
      p2 = {rng.uniform(0.0, width - 1.0), rng.uniform(0.0, height - 1.0)};
    } while ((p2 - p0).norm() < min_span);
    const Vec2 chord = p2 - p0;
    const double len = chord.norm();
    const Vec2 perp{-chord.y / len, chord.x / len};
    const Vec2 mid = (p0 + p2) * 0.5;
    const Vec2 p1 = mid + perp * (rng.uniform(-0.3, 0.3) * len);

    const double sigma = rng.uniform(1.5, 4.0);
    const double vessel_depth = rng.uniform(0.25, 0.55);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    const double approx_len = (p1 - p0).norm() + (p2 - p1).norm();
    const int steps = std::max(2, static_cast<int>(std::ceil(approx_len / 0.5)));
    for (int s = 0; s <= steps; ++s) {
      const Vec2 c = detail::bezier_point(p0, p1, p2, static_cast<double>(s) / steps);
      const int x0 = std::max(0, static_cast<int>(std::floor(c.x)) - radius);
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.x)) + radius);
      const int y0 = std::max(0, static_cast<int>(std::floor(c.y)) - radius);
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.y)) + radius);
      for (int py = y0; py <= y1; ++py) {
        for (int px = x0; px <= x1; ++px) {
          const double dx = px - c.x;
          const double dy = py - c.y;
          const double d = vessel_depth * std::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
          if (d > depth(px, py)) depth(px, py) = d;
        }
      }
    }
  }
  return depth;
}

/// Generates the synthetic wide-field retina. Deterministic for a fixed seed.
inline RetinaPhantom generate_phantom(uint64_t seed, double vessel_density, int width, int height,
                                      const CoverageRequirement& req = {}) {
  if (vessel_density < 0.0 || vessel_density > 1.0) {
    throw ParameterError("generate_phantom: vessel_density must be in [0,1]");
  }
  req.cal.validate();
  const double need_w = req.frame_width + 2.0 * req.range_deg * req.cal.ppd_x;
  const double need_h = req.frame_height + 2.0 * req.range_deg * req.cal.ppd_y;
  if (width < need_w || height < need_h) {
    throw CoverageError("generate_phantom: phantom too small for configured gaze range (need >= " +
                        std::to_string(static_cast<int>(std::ceil(need_w))) + "x" +
                        std::to_string(static_cast<int>(std::ceil(need_h))) + ")");
  }

  RetinaPhantom p;
  p.width = width;
  p.height = height;
  p.texture_seed = seed;
  p.vessel_density = vessel_density;
  p.intensity = texture_field(seed, width, height);
  if (vessel_density > 0.0) {
    const ImageD depth = vessel_depth_field(seed, width, height, vessel_density);
    for (size_t i = 0; i < p.intensity.size(); ++i) p.intensity[i] *= (1.0 - depth[i]);
  }
  clamp01_in_place(p.intensity);
  return p;
}

// ============================================================================
// Rendering
// ============================================================================

/// Phantom-pixel offset of a frame center for a gaze direction. Positive yaw
/// moves the sampled window right; positive pitch moves it up (-y).
inline Vec2 gaze_to_offset(const GazeAngle& gaze, const Calibration& cal) {
  return {gaze.yaw * cal.ppd_x, -gaze.pitch * cal.ppd_y};
}

inline GazeAngle offset_to_gaze(const Vec2& offset_px, const Calibration& cal) {
  return {offset_px.x / cal.ppd_x, -offset_px.y / cal.ppd_y};
}

/// Applies the appearance pipeline in order gamma -> blur -> vignette -> noise,
/// clamping to [0,1] after every stage. Deterministic given noise_seed; neutral
/// parameters return the frame unchanged.
inline Frame perturb_appearance(const Frame& frame, const AppearanceParams& ap,
                                uint64_t noise_seed = 0) {
  ap.validate();
  Frame out = frame;
  if (ap.gamma != 1.0) {
    for (auto& v : out.intensity.pixels()) v = std::clamp(std::pow(v, ap.gamma), 0.0, 1.0);
  }
  if (ap.blur_sigma > 0.0) {
    out.intensity = gaussian_blur(out.intensity, ap.blur_sigma);
    clamp01_in_place(out.intensity);
  }
  if (ap.vignette_strength > 0.0) {
    const Vec2 c = out.center();
    const double r2_max = c.x * c.x + c.y * c.y;
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const double dx = x - c.x;
        const double dy = y - c.y;
        const double factor = 1.0 - ap.vignette_strength * (dx * dx + dy * dy) / r2_max;
        out.intensity(x, y) = std::clamp(out.intensity(x, y) * factor, 0.0, 1.0);
      }
    }
  }
  if (ap.noise_std > 0.0) {
    Rng rng(noise_seed);
    for (auto& v : out.intensity.pixels()) v = std::clamp(v + rng.gaussian(0.0, ap.noise_std), 0.0, 1.0);
  }
  return out;
}

/// Renders the small-FoV frame seen at a gaze direction: bilinear crop of the
/// phantom at the gaze-proportional offset, then the appearance pipeline.
inline Frame render_frame(const RetinaPhantom& phantom, const GazeAngle& gaze,
                          const Calibration& cal, const AppearanceParams& ap,
                          uint64_t noise_seed = 0, int frame_width = kDefaultFrameWidth,
                          int frame_height = kDefaultFrameHeight) {
  cal.validate();
  const Vec2 offset = gaze_to_offset(gaze, cal);
  const Vec2 pc = phantom.center();
  const double half_w = (frame_width - 1) / 2.0;
  const double half_h = (frame_height - 1) / 2.0;
  const double x_lo = pc.x + offset.x - half_w;
  const double y_lo = pc.y + offset.y - half_h;
  if (x_lo < 0.0 || y_lo < 0.0 || x_lo + (frame_width - 1) > phantom.width - 1 ||
      y_lo + (frame_height - 1) > phantom.height - 1) {
    throw CoverageError("render_frame: gaze (" + std::to_string(gaze.yaw) + ", " +
                        std::to_string(gaze.pitch) + ") outside phantom coverage");
  }

  Frame frame;
  frame.width = frame_width;
  frame.height = frame_height;
  frame.intensity = ImageD(frame_width, frame_height);
  frame.true_gaze = gaze;
  for (int y = 0; y < frame_height; ++y) {
    for (int x = 0; x < frame_width; ++x) {
      frame.intensity(x, y) = phantom.intensity.sample_bilinear(x_lo + x, y_lo + y);
    }
  }
  clamp01_in_place(frame.intensity);
  return perturb_appearance(frame, ap, noise_seed);
}

// ============================================================================
// Grid scan
// ============================================================================

/// Frames of a rows x cols scan in row-major order plus the adjacency edges
/// between neighboring grid nodes.
struct GridScan {
  std::vector<Frame> frames;
  std::vector<std::pair<int, int>> adjacency;
  int central_node = 0;
  int rows = 0;
  int cols = 0;
  double spacing_deg = 0.0;
};

/// Gaze direction of grid node (row, col); the grid is centered on (0,0) gaze
/// with the top-left node at (-max yaw, +max pitch).
inline GazeAngle grid_node_gaze(int row, int col, int rows, int cols, double spacing_deg) {
  return {(col - (cols - 1) / 2.0) * spacing_deg, ((rows - 1) / 2.0 - row) * spacing_deg};
}

/// Rectangular scan of the retina. Default spacing 2.5 deg gives a 5x5 grid
/// spanning +/-5 deg with ~50% overlap between adjacent 253x207 frames.
inline GridScan grid_scan(const RetinaPhantom& phantom, const Calibration& cal,
                          const AppearanceParams& ap, int rows = 5, int cols = 5,
                          double spacing_deg = 2.5, uint64_t noise_seed = 0,
                          int frame_width = kDefaultFrameWidth,
                          int frame_height = kDefaultFrameHeight) {
  if (rows < 1 || cols < 1) throw ParameterError("grid_scan: rows/cols must be >= 1");
  if (spacing_deg < 0.0) throw ParameterError("grid_scan: spacing must be >= 0");

  GridScan scan;
  scan.rows = rows;
  scan.cols = cols;
  scan.spacing_deg = spacing_deg;
  scan.central_node = ((rows - 1) / 2) * cols + (cols - 1) / 2;
  scan.frames.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int node = r * cols + c;
      scan.frames.push_back(render_frame(phantom, grid_node_gaze(r, c, rows, cols, spacing_deg),
                                         cal, ap, noise_seed + static_cast<uint64_t>(node),
                                         frame_width, frame_height));
      if (c + 1 < cols) scan.adjacency.emplace_back(node, node + 1);
      if (r + 1 < rows) scan.adjacency.emplace_back(node, node + cols);
    }
  }
  return scan;
}

}  // namespace retrack::phantom
