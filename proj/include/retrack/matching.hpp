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
#include <limits>
#include <optional>
#include <span>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "retrack/common.hpp"
#include "retrack/features.hpp"
#include "retrack/imgmath.hpp"

namespace retrack::matching {

/// Mutual-nearest-neighbor match between two keypoints (or a keypoint and a
/// canonical-space entry). Positions are in whatever coordinates the caller
/// matched in; displacement() is tgt - src.
struct Correspondence {
  Vec2 src_pos;
  Vec2 tgt_pos;
  int src_index = -1;
  int tgt_index = -1;
  double desc_dist = 0.0;

  Vec2 displacement() const { return tgt_pos - src_pos; }
};

struct ScoredCorrespondence {
  Correspondence base;
  double score = 0.0;
};

struct ConsensusParams {
  double tau = 3.0;        // score kernel width in pixels
  int min_matches = 4;     // fewer candidates/inliers than this is a failure
  double inlier_cut = 0.5; // retention threshold on the score

  void validate() const {
    if (!(tau > 0.0)) throw ParameterError("ConsensusParams: tau must be > 0");
    if (min_matches < 1) throw ParameterError("ConsensusParams: min_matches must be >= 1");
  }
};

struct TranslationEstimate {
  Translation2D translation;
  double total_weight = 0.0;  // sum of retained scores (edge weight X)
  int inliers = 0;
};

// ============================================================================
// Mutual nearest-neighbor matching
// ============================================================================

struct NnPair {
  int a_index = -1;
  int b_index = -1;
  double desc_dist = 0.0;
};

/// Float-packed descriptor matrix for the matching hot loop. Pack once per
/// feature set (or once per canonical space) and reuse across frames.
class PackedDescriptors {
 public:
  PackedDescriptors() = default;
  explicit PackedDescriptors(std::span<const Descriptor> descs)
      : count_(static_cast<int>(descs.size())), data_(descs.size() * kDescriptorDim) {
    for (size_t i = 0; i < descs.size(); ++i) {
      for (int k = 0; k < kDescriptorDim; ++k) {
        data_[i * kDescriptorDim + k] = static_cast<float>(descs[i][k]);
      }
    }
  }

  int count() const { return count_; }
  const float* row(int i) const { return data_.data() + static_cast<size_t>(i) * kDescriptorDim; }

 private:
  int count_ = 0;
  std::vector<float> data_;
};

namespace detail {

#if defined(__AVX2__) && defined(__FMA__)
inline float hsum(__m256 v) {
  __m128 q = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  q = _mm_add_ps(q, _mm_movehl_ps(q, q));
  q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
  return _mm_cvtss_f32(q);
}

inline float dot128(const float* a, const float* b) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps();
  __m256 acc3 = _mm256_setzero_ps();
  for (int k = 0; k < kDescriptorDim; k += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 16), _mm256_loadu_ps(b + k + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 24), _mm256_loadu_ps(b + k + 24), acc3);
  }
  return hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3)));
}

/// One a-row against four b-rows; the four FMA chains interleave.
inline void dot128_x4(const float* a, const float* b0, const float* b1, const float* b2,
                      const float* b3, float out[4]) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps();
  __m256 acc3 = _mm256_setzero_ps();
  for (int k = 0; k < kDescriptorDim; k += 8) {
    const __m256 av = _mm256_loadu_ps(a + k);
    acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), acc0);
    acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), acc1);
    acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), acc2);
    acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), acc3);
  }
  out[0] = hsum(acc0);
  out[1] = hsum(acc1);
  out[2] = hsum(acc2);
  out[3] = hsum(acc3);
}
#else
inline float dot128(const float* a, const float* b) {
  // Eight independent lanes so the loop vectorizes without reassociating a
  // scalar reduction.
  float acc[8] = {};
  for (int k = 0; k < kDescriptorDim; k += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void dot128_x4(const float* a, const float* b0, const float* b1, const float* b2,
                      const float* b3, float out[4]) {
  out[0] = dot128(a, b0);
  out[1] = dot128(a, b1);
  out[2] = dot128(a, b2);
  out[3] = dot128(a, b3);
}
#endif

inline double distance_from_dot(float dot) {
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * static_cast<double>(dot)));
}

}  // namespace detail

/// Index pairs that are reciprocal nearest neighbors under Euclidean
/// descriptor distance (for unit-norm descriptors, largest dot product).
/// Distance ties break toward the lower index on both sides, so each keypoint
/// appears in at most one pair and mutual_nn(a,b) == mutual_nn(b,a) with
/// roles swapped. Reported distances carry float precision.
inline std::vector<NnPair> mutual_nn_pairs(const PackedDescriptors& a,
                                           const PackedDescriptors& b) {
  std::vector<NnPair> pairs;
  const int na = a.count();
  const int nb = b.count();
  if (na == 0 || nb == 0) return pairs;

  // Blocked over b so the streamed side stays cache-resident; visit order is
  // ascending on both sides, which makes ties break toward lower indices.
  std::vector<int> nn_a(static_cast<size_t>(na), -1), nn_b(static_cast<size_t>(nb), -1);
  std::vector<float> best_a(static_cast<size_t>(na), -2.0f),
      best_b(static_cast<size_t>(nb), -2.0f);
  constexpr int kBlock = 256;
  for (int jb = 0; jb < nb; jb += kBlock) {
    const int jend = std::min(jb + kBlock, nb);
    for (int i = 0; i < na; ++i) {
      const float* ai = a.row(i);
      float best = best_a[static_cast<size_t>(i)];
      int best_j = nn_a[static_cast<size_t>(i)];
      int j = jb;
      for (; j + 4 <= jend; j += 4) {
        float dots[4];
        detail::dot128_x4(ai, b.row(j), b.row(j + 1), b.row(j + 2), b.row(j + 3), dots);
        for (int t = 0; t < 4; ++t) {
          if (dots[t] > best) {
            best = dots[t];
            best_j = j + t;
          }
          if (dots[t] > best_b[static_cast<size_t>(j + t)]) {
            best_b[static_cast<size_t>(j + t)] = dots[t];
            nn_b[static_cast<size_t>(j + t)] = i;
          }
        }
      }
      for (; j < jend; ++j) {
        const float dot = detail::dot128(ai, b.row(j));
        if (dot > best) {
          best = dot;
          best_j = j;
        }
        if (dot > best_b[static_cast<size_t>(j)]) {
          best_b[static_cast<size_t>(j)] = dot;
          nn_b[static_cast<size_t>(j)] = i;
        }
      }
      best_a[static_cast<size_t>(i)] = best;
      nn_a[static_cast<size_t>(i)] = best_j;
    }
  }

  for (int i = 0; i < na; ++i) {
    const int j = nn_a[static_cast<size_t>(i)];
    if (j >= 0 && nn_b[static_cast<size_t>(j)] == i) {
      pairs.push_back({i, j, detail::distance_from_dot(best_a[static_cast<size_t>(i)])});
    }
  }
  return pairs;
}

inline std::vector<NnPair> mutual_nn_pairs(std::span<const Descriptor> a,
                                           std::span<const Descriptor> b) {
  auto pairs = mutual_nn_pairs(PackedDescriptors(a), PackedDescriptors(b));
  // Exact distances for the selected pairs only.
  for (auto& p : pairs) {
    p.desc_dist = descriptor_distance(a[static_cast<size_t>(p.a_index)],
                                      b[static_cast<size_t>(p.b_index)]);
  }
  return pairs;
}

/// Mutual-NN correspondences between two feature sets, with positions taken
/// from the keypoints.
inline std::vector<Correspondence> mutual_nn(const features::FeatureSet& a,
                                             const features::FeatureSet& b) {
  std::vector<Correspondence> out;
  for (const NnPair& p : mutual_nn_pairs(a.descriptors, b.descriptors)) {
    const auto& ka = a.keypoints[static_cast<size_t>(p.a_index)];
    const auto& kb = b.keypoints[static_cast<size_t>(p.b_index)];
    out.push_back({{ka.x, ka.y}, {kb.x, kb.y}, p.a_index, p.b_index, p.desc_dist});
  }
  return out;
}

// ============================================================================
// Confidence scoring (translation-consensus kernel)
// ============================================================================

/// Confidence score in [0,1] per candidate: a Gaussian kernel on the distance
/// between the candidate displacement and the robust consensus displacement.
/// The consensus is the candidate displacement minimizing the sum of
/// truncated squared distances (exhaustive over candidates; truncation at
/// 3*tau). Fewer than min_matches candidates scores everything 0.
inline std::vector<ScoredCorrespondence> score_matches(std::span<const Correspondence> candidates,
                                                       const ConsensusParams& cp = {}) {
  cp.validate();
  std::vector<ScoredCorrespondence> scored;
  scored.reserve(candidates.size());
  const size_t n = candidates.size();
  if (n < static_cast<size_t>(cp.min_matches)) {
    for (const auto& c : candidates) scored.push_back({c, 0.0});
    return scored;
  }

  std::vector<Vec2> disp(n);
  for (size_t i = 0; i < n; ++i) disp[i] = candidates[i].displacement();

  const double trunc2 = 9.0 * cp.tau * cp.tau;
  size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < n; ++j) {
    double cost = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const Vec2 d = disp[i] - disp[j];
      cost += std::min(d.dot(d), trunc2);
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = j;
    }
  }

  const Vec2 mode = disp[best];
  const double inv_two_tau2 = 1.0 / (2.0 * cp.tau * cp.tau);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 d = disp[i] - mode;
    scored.push_back({candidates[i], std::exp(-d.dot(d) * inv_two_tau2)});
  }
  return scored;
}

/// Ground-truth inlier labels for candidate matches (simulation only).
inline std::vector<int> label_matches(std::span<const Correspondence> candidates,
                                      Translation2D m_gt, double epsilon) {
  std::vector<int> labels;
  labels.reserve(candidates.size());
  for (const auto& c : candidates) {
    labels.push_back(imgmath::inlier_label(c.src_pos, c.tgt_pos, m_gt, epsilon));
  }
  return labels;
}

/// Score-weighted mean displacement over retained matches (score >=
/// inlier_cut). total_weight is the retained score sum, which becomes the
/// bundle-adjustment edge weight. Returns nullopt for fewer than min_matches
/// retained matches.
inline std::optional<TranslationEstimate> estimate_translation(
    std::span<const ScoredCorrespondence> scored, const ConsensusParams& cp = {}) {
  cp.validate();
  Vec2 weighted_sum{0.0, 0.0};
  double total = 0.0;
  int inliers = 0;
  for (const auto& sc : scored) {
    if (sc.score < cp.inlier_cut) continue;
    weighted_sum += sc.base.displacement() * sc.score;
    total += sc.score;
    ++inliers;
  }
  if (inliers < cp.min_matches || total <= 0.0) return std::nullopt;
  return TranslationEstimate{{weighted_sum.x / total, weighted_sum.y / total}, total, inliers};
}

}  // namespace retrack::matching
