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

#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "retrack/config.hpp"
#include "retrack/matching.hpp"
#include "retrack/phantom.hpp"
#include "test_support.hpp"

using namespace retrack;
using namespace retrack::matching;

namespace {

Descriptor planar_descriptor(double angle_rad) {
  Descriptor d{};
  d[0] = std::cos(angle_rad);
  d[1] = std::sin(angle_rad);
  return d;
}

Descriptor random_unit_descriptor(Rng& rng) {
  Descriptor d{};
  double norm2 = 0.0;
  for (auto& v : d) {
    v = rng.gaussian();
    norm2 += v * v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : d) v *= inv;
  return d;
}

features::FeatureSet make_set(const std::vector<Descriptor>& descs) {
  features::FeatureSet fs;
  for (size_t i = 0; i < descs.size(); ++i) {
    fs.keypoints.push_back({static_cast<double>(10 * i), static_cast<double>(5 * i), 0.5});
    fs.descriptors.push_back(descs[i]);
  }
  return fs;
}

// Exhaustive double-precision mutual-NN oracle with the same index
// tie-breaking.
std::set<std::pair<int, int>> brute_force_mutual(const std::vector<Descriptor>& a,
                                                 const std::vector<Descriptor>& b) {
  std::set<std::pair<int, int>> pairs;
  if (a.empty() || b.empty()) return pairs;
  auto nn_of_a = [&](int i) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(b.size()); ++j) {
      if (descriptor_distance(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]) <
          descriptor_distance(a[static_cast<size_t>(i)], b[static_cast<size_t>(best)])) {
        best = j;
      }
    }
    return best;
  };
  auto nn_of_b = [&](int j) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(a.size()); ++i) {
      if (descriptor_distance(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]) <
          descriptor_distance(a[static_cast<size_t>(best)], b[static_cast<size_t>(j)])) {
        best = i;
      }
    }
    return best;
  };
  for (int i = 0; i < static_cast<int>(a.size()); ++i) {
    const int j = nn_of_a(i);
    if (nn_of_b(j) == i) pairs.insert({i, j});
  }
  return pairs;
}

std::vector<Correspondence> displacement_candidates(const std::vector<Vec2>& displacements) {
  std::vector<Correspondence> out;
  for (size_t i = 0; i < displacements.size(); ++i) {
    const Vec2 src{static_cast<double>(i), 2.0 * static_cast<double>(i)};
    out.push_back({src, src + displacements[i], static_cast<int>(i), static_cast<int>(i), 0.1});
  }
  return out;
}

}  // namespace

// ============================================================================
// Mutual nearest-neighbor matching
// ============================================================================

TEST_CASE("identical feature sets pair up one to one", "[matching]") {
  Rng rng(3);
  std::vector<Descriptor> descs;
  for (int i = 0; i < 20; ++i) descs.push_back(random_unit_descriptor(rng));
  const auto fs = make_set(descs);
  const auto pairs = mutual_nn(fs, fs);
  REQUIRE(pairs.size() == 20);
  for (const auto& c : pairs) {
    CHECK(c.src_index == c.tgt_index);
    CHECK(c.desc_dist == Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("empty inputs give no correspondences", "[matching]") {
  const features::FeatureSet empty;
  const auto fs = make_set({test::axis_descriptor(0)});
  CHECK(mutual_nn(empty, fs).empty());
  CHECK(mutual_nn(fs, empty).empty());
  CHECK(mutual_nn(empty, empty).empty());
}

TEST_CASE("one-sided nearest neighbors are excluded", "[matching]") {
  // a0's nearest is b0, but b0 prefers a1, so (a0, b0) must not appear.
  const std::vector<Descriptor> a{planar_descriptor(0.0), planar_descriptor(0.8)};
  const std::vector<Descriptor> b{planar_descriptor(0.5), planar_descriptor(-1.5)};
  const auto oracle = brute_force_mutual(a, b);
  REQUIRE(oracle == std::set<std::pair<int, int>>{{1, 0}});

  const auto pairs = mutual_nn_pairs(a, b);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].a_index == 1);
  CHECK(pairs[0].b_index == 0);
}

TEST_CASE("mutual matching agrees with the exhaustive oracle", "[matching]") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Descriptor> a, b;
    const int na = rng.uniform_int(1, 40);
    const int nb = rng.uniform_int(1, 40);
    for (int i = 0; i < na; ++i) a.push_back(random_unit_descriptor(rng));
    for (int j = 0; j < nb; ++j) b.push_back(random_unit_descriptor(rng));

    std::set<std::pair<int, int>> got;
    for (const auto& p : mutual_nn_pairs(a, b)) got.insert({p.a_index, p.b_index});
    CHECK(got == brute_force_mutual(a, b));
  }
}

TEST_CASE("mutual matching is symmetric in its arguments", "[matching]") {
  Rng rng(13);
  std::vector<Descriptor> a, b;
  for (int i = 0; i < 30; ++i) a.push_back(random_unit_descriptor(rng));
  for (int j = 0; j < 25; ++j) b.push_back(random_unit_descriptor(rng));
  std::set<std::pair<int, int>> forward, backward;
  for (const auto& p : mutual_nn_pairs(a, b)) forward.insert({p.a_index, p.b_index});
  for (const auto& p : mutual_nn_pairs(b, a)) backward.insert({p.b_index, p.a_index});
  CHECK(forward == backward);
}

// ============================================================================
// Consensus scoring
// ============================================================================

TEST_CASE("identical displacements all score 1", "[matching]") {
  const auto cands = displacement_candidates(std::vector<Vec2>(6, Vec2{12.0, -3.0}));
  const auto scored = score_matches(cands);
  REQUIRE(scored.size() == 6);
  for (const auto& sc : scored) CHECK(sc.score == Approx(1.0));
}

TEST_CASE("a gross outlier scores zero against a tight cluster", "[matching]") {
  Rng rng(7);
  std::vector<Vec2> disp;
  for (int i = 0; i < 9; ++i) {
    disp.push_back({10.0 + rng.uniform(-0.3, 0.3), -5.0 + rng.uniform(-0.3, 0.3)});
  }
  disp.push_back({10.0 + 30.0, -5.0});  // 10*tau away
  const auto scored = score_matches(displacement_candidates(disp));
  for (int i = 0; i < 9; ++i) CHECK(scored[static_cast<size_t>(i)].score > 0.9);
  CHECK(scored[9].score < 1e-15);
}

TEST_CASE("fewer candidates than min_matches scores everything zero", "[matching]") {
  const auto cands = displacement_candidates({{1.0, 0.0}, {1.1, 0.0}, {0.9, 0.0}});
  const auto scored = score_matches(cands);  // default min_matches = 4
  REQUIRE(scored.size() == 3);
  for (const auto& sc : scored) CHECK(sc.score == 0.0);
}

TEST_CASE("scores are invariant to candidate order", "[matching]") {
  Rng rng(17);
  std::vector<Vec2> disp;
  for (int i = 0; i < 25; ++i) {
    disp.push_back({rng.uniform(-1.0, 1.0) + 20.0, rng.uniform(-1.0, 1.0)});
  }
  disp.push_back({90.0, 0.0});
  auto cands = displacement_candidates(disp);
  const auto scored = score_matches(cands);

  std::vector<Correspondence> shuffled = cands;
  for (size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  const auto scored_shuffled = score_matches(shuffled);
  for (const auto& ss : scored_shuffled) {
    const auto match = std::find_if(scored.begin(), scored.end(), [&](const auto& sc) {
      return sc.base.src_index == ss.base.src_index;
    });
    REQUIRE(match != scored.end());
    CHECK(ss.score == Approx(match->score).margin(1e-12));
  }
}

TEST_CASE("consensus parameters are validated", "[matching]") {
  ConsensusParams bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(score_matches({}, bad), ParameterError);
}

// ============================================================================
// Ground-truth labeling
// ============================================================================

TEST_CASE("label_matches applies the strict inlier rule per candidate", "[matching]") {
  std::vector<Correspondence> cands;
  cands.push_back({{0.0, 0.0}, {10.0, 0.0}, 0, 0, 0.0});          // exact
  cands.push_back({{0.0, 0.0}, {20.0, 0.0}, 1, 1, 0.0});          // 10.0 off
  cands.push_back({{0.0, 0.0}, {10.0, 9.99}, 2, 2, 0.0});         // just inside
  const auto labels = label_matches(cands, {10.0, 0.0}, 10.0);
  CHECK(labels == std::vector<int>{1, 0, 1});
  CHECK(label_matches({}, {0.0, 0.0}, 10.0).empty());
}

// ============================================================================
// Translation estimation
// ============================================================================

TEST_CASE("uniform inliers recover the displacement and total weight", "[matching]") {
  const auto cands = displacement_candidates(std::vector<Vec2>(5, Vec2{10.0, 0.0}));
  auto scored = score_matches(cands);
  const auto est = estimate_translation(scored);
  REQUIRE(est.has_value());
  CHECK(est->translation.dx == Approx(10.0).margin(1e-12));
  CHECK(est->translation.dy == Approx(0.0).margin(1e-12));
  CHECK(est->total_weight == Approx(5.0).margin(1e-12));
  CHECK(est->inliers == 5);
}

TEST_CASE("estimate is the score-weighted mean of retained matches", "[matching]") {
  std::vector<ScoredCorrespondence> scored;
  scored.push_back({{{0.0, 0.0}, {10.0, 0.0}, 0, 0, 0.0}, 0.75});
  scored.push_back({{{0.0, 0.0}, {14.0, 0.0}, 1, 1, 0.0}, 0.25});
  ConsensusParams cp;
  cp.min_matches = 2;
  cp.inlier_cut = 0.2;
  const auto est = estimate_translation(scored, cp);
  REQUIRE(est.has_value());
  CHECK(est->translation.dx == Approx(11.0).margin(1e-12));
  CHECK(est->total_weight == Approx(1.0).margin(1e-12));
}

TEST_CASE("too few inliers is a registration failure", "[matching]") {
  std::vector<ScoredCorrespondence> scored;
  scored.push_back({{{0.0, 0.0}, {10.0, 0.0}, 0, 0, 0.0}, 1.0});
  scored.push_back({{{0.0, 0.0}, {10.0, 0.0}, 1, 1, 0.0}, 1.0});
  scored.push_back({{{0.0, 0.0}, {10.0, 0.0}, 2, 2, 0.0}, 0.1});  // below the cut
  CHECK_FALSE(estimate_translation(scored).has_value());
}

// ============================================================================
// Rendered-pair registration
// ============================================================================

namespace {

const phantom::RetinaPhantom& shared_phantom() {
  static const phantom::RetinaPhantom p = phantom::generate_phantom(7, 0.5, 1200, 1100);
  return p;
}

}  // namespace

TEST_CASE("registration of rendered pairs is sub-pixel accurate", "[matching]") {
  const config::AppearanceJitter jitter;
  Rng rng(29);
  const features::ExtractParams extract_params{.detector = {}, .enhance = {.enabled = true}};

  int checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const GazeAngle g1{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const GazeAngle g2{g1.yaw + rng.uniform(-1.5, 1.5), g1.pitch + rng.uniform(-1.5, 1.5)};
    const auto f1 = phantom::render_frame(shared_phantom(), g1, {}, jitter.draw(rng), rng.next_u64());
    const auto f2 = phantom::render_frame(shared_phantom(), g2, {}, jitter.draw(rng), rng.next_u64());

    const auto fa = features::extract(f1.intensity, extract_params);
    const auto fb = features::extract(f2.intensity, extract_params);
    const auto scored = score_matches(mutual_nn(fa, fb));
    const auto est = estimate_translation(scored);
    REQUIRE(est.has_value());

    // Feature displacement equals the negated window offset difference.
    const Vec2 truth = (phantom::gaze_to_offset(g1, {}) - phantom::gaze_to_offset(g2, {}));
    INFO("pair " << trial << ": est (" << est->translation.dx << ", " << est->translation.dy
                 << ") vs truth (" << truth.x << ", " << truth.y << ")");
    CHECK(std::abs(est->translation.dx - truth.x) < 0.25);
    CHECK(std::abs(est->translation.dy - truth.y) < 0.25);
    ++checked;
  }
  CHECK(checked == 3);
}

TEST_CASE("high scores agree with ground-truth inlier labels", "[matching]") {
  const config::AppearanceJitter jitter;
  Rng rng(31);
  int retained = 0;
  int retained_inliers = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const GazeAngle g1{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const GazeAngle g2{g1.yaw + rng.uniform(-1.5, 1.5), g1.pitch + rng.uniform(-1.5, 1.5)};
    const auto f1 = phantom::render_frame(shared_phantom(), g1, {}, jitter.draw(rng), rng.next_u64());
    const auto f2 = phantom::render_frame(shared_phantom(), g2, {}, jitter.draw(rng), rng.next_u64());
    const features::ExtractParams ep{.detector = {}, .enhance = {.enabled = true}};
    const auto cands = mutual_nn(features::extract(f1.intensity, ep),
                                 features::extract(f2.intensity, ep));
    const auto scored = score_matches(cands);

    const Vec2 truth = (phantom::gaze_to_offset(g1, {}) - phantom::gaze_to_offset(g2, {}));
    const auto labels = label_matches(cands, {truth.x, truth.y}, 10.0);
    for (size_t i = 0; i < scored.size(); ++i) {
      if (scored[i].score >= 0.5) {
        ++retained;
        retained_inliers += labels[i];
      }
    }
  }
  REQUIRE(retained > 100);
  CHECK(static_cast<double>(retained_inliers) >= 0.99 * static_cast<double>(retained));
}
