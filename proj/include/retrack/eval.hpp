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
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "retrack/canonical.hpp"
#include "retrack/common.hpp"
#include "retrack/gaze.hpp"
#include "retrack/phantom.hpp"

namespace retrack::eval {

/// Error distribution summary: mean, population std, and the 50/75/95th
/// percentiles (linear interpolation between order statistics).
struct ErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
  double e50 = 0.0;
  double e75 = 0.0;
  double e95 = 0.0;
  int count = 0;
};

struct RobustnessRow {
  double noise_std_px = 0.0;
  double max_node_error_mean_deg = 0.0;
  double max_node_error_std_deg = 0.0;
  int trials = 0;
};

struct EdgeRemovalRow {
  int edge_index = -1;
  bool connected_after_removal = false;
  double max_node_shift_deg = 0.0;
};

struct CoveragePoint {
  double threshold_deg = 0.0;
  double fraction_mean_within = 0.0;
  double fraction_e95_within = 0.0;
};

// ============================================================================
// Error metrics
// ============================================================================

/// Euclidean norm of the (yaw, pitch) error in degrees.
inline double angular_error(const gaze::GazeEstimate& est, const GazeAngle& truth) {
  if (!est.valid) throw ParameterError("angular_error: estimate is invalid");
  return std::hypot(est.yaw - truth.yaw, est.pitch - truth.pitch);
}

struct ErrorCollection {
  std::vector<double> errors;
  int excluded = 0;  // invalid estimates, reported as dropout
};

inline ErrorCollection collect_errors(std::span<const gaze::GazeEstimate> estimates,
                                      std::span<const GazeAngle> truths) {
  if (estimates.size() != truths.size()) throw ShapeError("collect_errors: length mismatch");
  ErrorCollection out;
  for (size_t i = 0; i < estimates.size(); ++i) {
    if (!estimates[i].valid) {
      ++out.excluded;
      continue;
    }
    out.errors.push_back(angular_error(estimates[i], truths[i]));
  }
  return out;
}

/// Percentile by linear interpolation: rank = p/100 * (n-1) over the sorted
/// sample.
inline double percentile(std::span<const double> sorted, double p) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(rank);
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline ErrorStats percentile_stats(std::span<const double> errors) {
  if (errors.empty()) throw ParameterError("percentile_stats: empty input");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());

  ErrorStats stats;
  stats.count = static_cast<int>(sorted.size());
  double sum = 0.0;
  for (const double e : sorted) sum += e;
  stats.mean = sum / static_cast<double>(sorted.size());
  double var = 0.0;
  for (const double e : sorted) var += (e - stats.mean) * (e - stats.mean);
  stats.stddev = std::sqrt(var / static_cast<double>(sorted.size()));
  stats.e50 = percentile(sorted, 50.0);
  stats.e75 = percentile(sorted, 75.0);
  stats.e95 = percentile(sorted, 95.0);
  return stats;
}

/// Population coverage: fraction of trials whose mean (and, separately, E95)
/// is within each threshold. Non-decreasing in the threshold.
inline std::vector<CoveragePoint> coverage_curve(std::span<const ErrorStats> per_trial,
                                                 std::span<const double> thresholds) {
  if (per_trial.empty()) throw ParameterError("coverage_curve: no trials");
  std::vector<CoveragePoint> curve;
  curve.reserve(thresholds.size());
  for (const double t : thresholds) {
    CoveragePoint pt;
    pt.threshold_deg = t;
    int mean_ok = 0;
    int e95_ok = 0;
    for (const auto& s : per_trial) {
      if (s.mean <= t) ++mean_ok;
      if (s.e95 <= t) ++e95_ok;
    }
    pt.fraction_mean_within = static_cast<double>(mean_ok) / static_cast<double>(per_trial.size());
    pt.fraction_e95_within = static_cast<double>(e95_ok) / static_cast<double>(per_trial.size());
    curve.push_back(pt);
  }
  return curve;
}

// ============================================================================
// Bundle-adjustment robustness simulations
// ============================================================================

/// Exact grid-scan measurements: mu = n_to - n_from from ground-truth node
/// offsets, unit weights.
struct SyntheticGrid {
  canonical::GridGraph graph;
  std::vector<canonical::EdgeMeasurement> measurements;
  std::vector<Vec2> true_positions;  // gauge-fixed to the central node
};

inline SyntheticGrid make_exact_grid(int rows, int cols, double spacing_deg,
                                     const Calibration& cal) {
  SyntheticGrid g;
  g.graph.node_count = rows * cols;
  g.graph.central_node = ((rows - 1) / 2) * cols + (cols - 1) / 2;
  std::vector<Vec2> offsets;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      offsets.push_back(
          phantom::gaze_to_offset(phantom::grid_node_gaze(r, c, rows, cols, spacing_deg), cal));
      const int node = r * cols + c;
      if (c + 1 < cols) g.graph.edges.emplace_back(node, node + 1);
      if (r + 1 < rows) g.graph.edges.emplace_back(node, node + cols);
    }
  }
  const Vec2 center = offsets[static_cast<size_t>(g.graph.central_node)];
  for (auto& o : offsets) o = o - center;
  g.true_positions = offsets;
  for (size_t e = 0; e < g.graph.edges.size(); ++e) {
    const auto [from, to] = g.graph.edges[e];
    canonical::EdgeMeasurement m;
    m.edge_index = static_cast<int>(e);
    const Vec2 mu = offsets[static_cast<size_t>(to)] - offsets[static_cast<size_t>(from)];
    m.mu = {mu.x, mu.y};
    m.weight = 1.0;
    g.measurements.push_back(m);
  }
  return g;
}

namespace detail {

inline double max_node_error_deg(std::span<const Vec2> solved, std::span<const Vec2> reference,
                                 const Calibration& cal) {
  double worst = 0.0;
  for (size_t i = 0; i < solved.size(); ++i) {
    const Vec2 d = solved[i] - reference[i];
    worst = std::max(worst, std::hypot(d.x / cal.ppd_x, d.y / cal.ppd_y));
  }
  return worst;
}

}  // namespace detail

/// Gaussian-noise robustness study: i.i.d. per-axis noise on every edge
/// measurement of an exact grid, unit weights, repeated over trials. Reports
/// the max-over-nodes position error in degrees (mean +/- std across trials).
inline std::vector<RobustnessRow> robustness_noise_sim(int rows, int cols, double spacing_deg,
                                                       const Calibration& cal,
                                                       std::span<const double> noise_stds,
                                                       int trials, uint64_t seed) {
  if (trials < 30) throw ParameterError("robustness_noise_sim: trials must be >= 30");
  const auto grid = make_exact_grid(rows, cols, spacing_deg, cal);
  std::vector<RobustnessRow> rows_out;
  Rng rng(seed);
  for (const double noise : noise_stds) {
    std::vector<double> max_errors;
    max_errors.reserve(static_cast<size_t>(trials));
    for (int t = 0; t < trials; ++t) {
      auto noisy = grid.measurements;
      for (auto& m : noisy) {
        m.mu.dx += rng.gaussian(0.0, noise);
        m.mu.dy += rng.gaussian(0.0, noise);
      }
      const auto solved = canonical::bundle_adjust(grid.graph, noisy);
      max_errors.push_back(detail::max_node_error_deg(solved, grid.true_positions, cal));
    }
    RobustnessRow row;
    row.noise_std_px = noise;
    row.trials = trials;
    double sum = 0.0;
    for (const double e : max_errors) sum += e;
    row.max_node_error_mean_deg = sum / static_cast<double>(trials);
    double var = 0.0;
    for (const double e : max_errors) {
      var += (e - row.max_node_error_mean_deg) * (e - row.max_node_error_mean_deg);
    }
    row.max_node_error_std_deg = std::sqrt(var / static_cast<double>(trials));
    rows_out.push_back(row);
  }
  return rows_out;
}

/// Single-edge-removal study: drops one measurement at a time, re-solves, and
/// reports the worst node shift (in degrees) against the all-edges solution.
inline std::vector<EdgeRemovalRow> edge_removal_sim(
    const canonical::GridGraph& graph, std::span<const canonical::EdgeMeasurement> measurements,
    const Calibration& cal) {
  const auto baseline = canonical::bundle_adjust(graph, measurements);
  std::vector<EdgeRemovalRow> out;
  for (size_t skip = 0; skip < measurements.size(); ++skip) {
    std::vector<canonical::EdgeMeasurement> reduced;
    reduced.reserve(measurements.size() - 1);
    for (size_t i = 0; i < measurements.size(); ++i) {
      if (i != skip) reduced.push_back(measurements[i]);
    }
    EdgeRemovalRow row;
    row.edge_index = measurements[skip].edge_index;
    row.connected_after_removal = canonical::is_connected(graph, reduced);
    if (row.connected_after_removal) {
      const auto solved = canonical::bundle_adjust(graph, reduced);
      row.max_node_shift_deg = detail::max_node_error_deg(solved, baseline, cal);
    }
    out.push_back(row);
  }
  return out;
}

// ============================================================================
// Blended-map ablation baseline
// ============================================================================

/// Explicit reference map: scan frames composited at their node positions
/// with linear distance-to-border feathering.
struct BlendedMap {
  ImageD image;
  Vec2 origin;  // canvas pixel coordinates of the canonical origin
};

inline BlendedMap build_blended_map(std::span<const phantom::Frame> frames,
                                    std::span<const Vec2> node_positions) {
  if (frames.empty() || frames.size() != node_positions.size()) {
    throw ShapeError("build_blended_map: frames/node positions disagree");
  }
  const int fw = frames[0].width;
  const int fh = frames[0].height;
  const Vec2 frame_center{(fw - 1) / 2.0, (fh - 1) / 2.0};

  double lo_x = 0.0, lo_y = 0.0, hi_x = 0.0, hi_y = 0.0;
  for (size_t i = 0; i < frames.size(); ++i) {
    const Vec2 lo = node_positions[i] - frame_center;
    lo_x = std::min(lo_x, lo.x);
    lo_y = std::min(lo_y, lo.y);
    hi_x = std::max(hi_x, lo.x + (fw - 1));
    hi_y = std::max(hi_y, lo.y + (fh - 1));
  }
  const int origin_x = static_cast<int>(std::ceil(-lo_x));
  const int origin_y = static_cast<int>(std::ceil(-lo_y));
  const int canvas_w = origin_x + static_cast<int>(std::ceil(hi_x)) + 1;
  const int canvas_h = origin_y + static_cast<int>(std::ceil(hi_y)) + 1;

  BlendedMap map;
  map.origin = {static_cast<double>(origin_x), static_cast<double>(origin_y)};
  map.image = ImageD(canvas_w, canvas_h, 0.0);

  ImageD weight_sum(canvas_w, canvas_h, 0.0);
  ImageD value_sum(canvas_w, canvas_h, 0.0);
  for (size_t i = 0; i < frames.size(); ++i) {
    const Vec2 top_left = node_positions[i] - frame_center + map.origin;
    const int x0 = std::max(0, static_cast<int>(std::ceil(top_left.x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(top_left.y)));
    const int x1 = std::min(canvas_w - 1, static_cast<int>(std::floor(top_left.x + fw - 1)));
    const int y1 = std::min(canvas_h - 1, static_cast<int>(std::floor(top_left.y + fh - 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double lx = x - top_left.x;
        const double ly = y - top_left.y;
        const double w =
            std::min(std::min(lx + 1.0, fw - lx), std::min(ly + 1.0, fh - ly));
        value_sum(x, y) += w * frames[i].intensity.sample_bilinear(lx, ly);
        weight_sum(x, y) += w;
      }
    }
  }
  for (size_t p = 0; p < map.image.size(); ++p) {
    map.image[p] = weight_sum[p] > 0.0 ? value_sum[p] / weight_sum[p] : 0.0;
  }
  clamp01_in_place(map.image);
  return map;
}

/// Re-expresses detected map features as a canonical feature space so the
/// standard tracker can run against the explicit blended reference. The map
/// is treated as one big frame: extraction runs with the caller's per-frame
/// parameters unchanged.
inline canonical::CanonicalFeatureSpace blended_map_space(const BlendedMap& map,
                                                          const features::ExtractParams& params,
                                                          const Calibration& cal) {
  const auto feats = features::extract(map.image, params);
  canonical::CanonicalFeatureSpace space;
  space.cal = cal;
  space.central_node = 0;
  space.node_positions = {Vec2{0.0, 0.0}};
  space.entries.reserve(feats.size());
  for (size_t k = 0; k < feats.size(); ++k) {
    space.entries.push_back(
        {Vec2{feats.keypoints[k].x, feats.keypoints[k].y} - map.origin, feats.descriptors[k]});
  }
  return space;
}

// ============================================================================
// Runtime breakdown
// ============================================================================

struct StageTime {
  std::string stage;
  double mean_ms = 0.0;
};

struct BenchResult {
  std::vector<StageTime> stages;
  double total_mean_ms = 0.0;  // end-to-end per frame, including glue
  int frames = 0;
};

/// Wall-clock per-stage latency over a warmed-up run of the tracking
/// pipeline.
inline BenchResult bench_stages(std::span<const phantom::Frame> frames,
                                const canonical::CanonicalFeatureSpace& space,
                                const gaze::TrackerConfig& cfg) {
  using clock = std::chrono::steady_clock;
  if (frames.empty()) throw ParameterError("bench_stages: no frames");

  const gaze::SpaceIndex space_index = gaze::index_space(space);

  enum Stage { kEnhance, kDetectDescribe, kNms, kMatch, kScore, kGaze, kStageCount };
  const char* names[kStageCount] = {"enhancement",  "detection_description",
                                    "nms_sampling", "matching",
                                    "scoring",      "gaze_computation"};
  double stage_ns[kStageCount] = {};
  double total_ns = 0.0;

  // Warm-up pass on the first frame.
  (void)gaze::track_frame(frames[0], space, cfg);

  for (const auto& frame : frames) {
    const auto frame_start = clock::now();
    auto timed = [&](Stage s, auto&& fn) {
      const auto t0 = clock::now();
      auto result = fn();
      stage_ns[s] += std::chrono::duration<double, std::nano>(clock::now() - t0).count();
      return result;
    };

    const ImageD* working = &frame.intensity;
    ImageD enhanced;
    if (cfg.extract.enhance.enabled) {
      enhanced = timed(kEnhance, [&] {
        return imgmath::enhance(frame.intensity,
                                {features::enhancement_alpha(frame.intensity, cfg.extract.enhance),
                                 cfg.extract.enhance.iterations});
      });
      working = &enhanced;
    }
    const auto response = timed(kDetectDescribe, [&] { return features::response_map(*working); });
    const auto keypoints = timed(kNms, [&] { return features::nms_detect(response, cfg.extract.detector); });
    const auto feats = timed(kDetectDescribe, [&] { return features::describe(*working, keypoints); });

    const Vec2 frame_center = frame.center();
    const auto pairs = timed(kMatch, [&] {
      return matching::mutual_nn_pairs(matching::PackedDescriptors(feats.descriptors),
                                       space_index.packed);
    });
    std::vector<matching::Correspondence> candidates;
    for (const auto& p : pairs) {
      const int entry = space_index.entry_of_row[static_cast<size_t>(p.b_index)];
      const auto& kp = feats.keypoints[static_cast<size_t>(p.a_index)];
      candidates.push_back({Vec2{kp.x, kp.y} - frame_center,
                            space.entries[static_cast<size_t>(entry)].position, p.a_index, entry,
                            p.desc_dist});
    }
    const auto scored = timed(kScore, [&] { return matching::score_matches(candidates, cfg.consensus); });
    (void)timed(kGaze, [&] { return gaze::estimate_gaze(scored, cfg); });

    total_ns += std::chrono::duration<double, std::nano>(clock::now() - frame_start).count();
  }

  BenchResult result;
  result.frames = static_cast<int>(frames.size());
  const double to_ms = 1e-6 / static_cast<double>(frames.size());
  for (int s = 0; s < kStageCount; ++s) result.stages.push_back({names[s], stage_ns[s] * to_ms});
  result.total_mean_ms = total_ns * to_ms;
  return result;
}

}  // namespace retrack::eval
