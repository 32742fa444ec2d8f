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

#include <cstring>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "retrack/canonical.hpp"
#include "retrack/common.hpp"
#include "retrack/features.hpp"
#include "retrack/matching.hpp"
#include "retrack/phantom.hpp"

namespace retrack::gaze {

/// Per-frame gaze estimate. Invalid estimates (too few retained matches)
/// carry zero angles and valid = false so callers can report dropout.
struct GazeEstimate {
  double yaw = 0.0;
  double pitch = 0.0;
  int n_matches = 0;
  double total_score = 0.0;
  bool valid = false;
};

struct TrackerConfig {
  Calibration cal{};
  matching::ConsensusParams consensus{};
  features::ExtractParams extract{};
  bool steering_enabled = false;
};

/// Matcher-side view of a canonical space: float-packed descriptors with
/// bitwise-duplicate entries collapsed. The space keeps every matched
/// feature, but identical (position, descriptor) clones can never win a
/// mutual-NN tie over their first occurrence, so skipping them changes
/// nothing except matching cost.
struct SpaceIndex {
  matching::PackedDescriptors packed;
  std::vector<int> entry_of_row;  // matcher row -> space entry index
};

inline SpaceIndex index_space(const canonical::CanonicalFeatureSpace& space) {
  SpaceIndex index;
  std::vector<Descriptor> unique_descs;
  std::unordered_map<std::string, int> seen;
  seen.reserve(space.entries.size());
  std::string key(sizeof(double) * (kDescriptorDim + 2), '\0');
  for (size_t e = 0; e < space.entries.size(); ++e) {
    const auto& entry = space.entries[e];
    std::memcpy(key.data(), entry.descriptor.data(), sizeof(double) * kDescriptorDim);
    std::memcpy(key.data() + sizeof(double) * kDescriptorDim, &entry.position.x, sizeof(double));
    std::memcpy(key.data() + sizeof(double) * (kDescriptorDim + 1), &entry.position.y,
                sizeof(double));
    if (seen.emplace(key, static_cast<int>(e)).second) {
      unique_descs.push_back(entry.descriptor);
      index.entry_of_row.push_back(static_cast<int>(e));
    }
  }
  index.packed = matching::PackedDescriptors(unique_descs);
  return index;
}

/// Matches frame features against the canonical space. Displacements are
/// t_space - t_src with t_src measured from the source image center, so the
/// consensus displacement is directly the frame-center position in canonical
/// coordinates. The SpaceIndex overload avoids re-indexing per frame.
inline std::vector<matching::ScoredCorrespondence> match_to_space(
    const features::FeatureSet& frame_features, const canonical::CanonicalFeatureSpace& space,
    const SpaceIndex& index, const matching::ConsensusParams& cp,
    int frame_width = phantom::kDefaultFrameWidth,
    int frame_height = phantom::kDefaultFrameHeight) {
  const Vec2 frame_center{(frame_width - 1) / 2.0, (frame_height - 1) / 2.0};
  std::vector<matching::Correspondence> candidates;
  const matching::PackedDescriptors frame_packed(frame_features.descriptors);
  for (const auto& p : matching::mutual_nn_pairs(frame_packed, index.packed)) {
    const int entry = index.entry_of_row[static_cast<size_t>(p.b_index)];
    const auto& kp = frame_features.keypoints[static_cast<size_t>(p.a_index)];
    candidates.push_back({Vec2{kp.x, kp.y} - frame_center,
                          space.entries[static_cast<size_t>(entry)].position, p.a_index, entry,
                          p.desc_dist});
  }
  return matching::score_matches(candidates, cp);
}

inline std::vector<matching::ScoredCorrespondence> match_to_space(
    const features::FeatureSet& frame_features, const canonical::CanonicalFeatureSpace& space,
    const matching::ConsensusParams& cp, int frame_width = phantom::kDefaultFrameWidth,
    int frame_height = phantom::kDefaultFrameHeight) {
  return match_to_space(frame_features, space, index_space(space), cp, frame_width, frame_height);
}

/// Score-weighted average displacement over retained matches, converted to
/// degrees via the calibration; adds the steering offset when enabled.
inline GazeEstimate estimate_gaze(std::span<const matching::ScoredCorrespondence> scored,
                                  const TrackerConfig& cfg) {
  cfg.cal.validate();
  GazeEstimate est;
  Vec2 weighted{0.0, 0.0};
  for (const auto& sc : scored) {
    if (sc.score < cfg.consensus.inlier_cut) continue;
    weighted += sc.base.displacement() * sc.score;
    est.total_score += sc.score;
    ++est.n_matches;
  }
  if (est.n_matches < cfg.consensus.min_matches || est.total_score <= 0.0) {
    return GazeEstimate{};
  }
  const Vec2 displacement = weighted * (1.0 / est.total_score);
  const GazeAngle angle = phantom::offset_to_gaze(displacement, cfg.cal);
  est.yaw = angle.yaw;
  est.pitch = angle.pitch;
  if (cfg.steering_enabled) {
    est.yaw += cfg.cal.steering_offset.yaw;
    est.pitch += cfg.cal.steering_offset.pitch;
  }
  est.valid = true;
  return est;
}

inline GazeEstimate track_frame(const phantom::Frame& frame,
                                const canonical::CanonicalFeatureSpace& space,
                                const SpaceIndex& index, const TrackerConfig& cfg) {
  const auto feats = features::extract(frame.intensity, cfg.extract);
  const auto scored = match_to_space(feats, space, index, cfg.consensus, frame.width, frame.height);
  return estimate_gaze(scored, cfg);
}

inline GazeEstimate track_frame(const phantom::Frame& frame,
                                const canonical::CanonicalFeatureSpace& space,
                                const TrackerConfig& cfg) {
  return track_frame(frame, space, index_space(space), cfg);
}

/// Per-frame tracking over a sequence; frames are independent (no temporal
/// filtering), so results are a pure elementwise map.
inline std::vector<GazeEstimate> track_sequence(std::span<const phantom::Frame> frames,
                                                const canonical::CanonicalFeatureSpace& space,
                                                const TrackerConfig& cfg) {
  const SpaceIndex index = index_space(space);
  std::vector<GazeEstimate> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(track_frame(f, space, index, cfg));
  return out;
}

}  // namespace retrack::gaze
