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

#include "retrack/eval.hpp"
#include "retrack/gaze.hpp"
#include "retrack/pipeline.hpp"
#include "test_support.hpp"

using namespace retrack;
using namespace retrack::gaze;

namespace {

struct Fixture {
  config::RunConfig cfg;
  pipeline::Dataset dataset;
  canonical::CanonicalFeatureSpace space;
  TrackerConfig tracker;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture fx;
    fx.cfg.trials.clear();
    fx.dataset = pipeline::generate_dataset(fx.cfg);
    fx.space = pipeline::build_space(fx.dataset.scan.frames,
                                     pipeline::graph_from_scan(fx.dataset.scan), fx.cfg)
                   .space;
    fx.tracker.cal = fx.cfg.cal;
    fx.tracker.consensus = fx.cfg.consensus;
    fx.tracker.extract = fx.cfg.extract;
    return fx;
  }();
  return f;
}

matching::ScoredCorrespondence scored_displacement(double dx, double dy, double score) {
  matching::ScoredCorrespondence sc;
  sc.base = {{0.0, 0.0}, {dx, dy}, 0, 0, 0.0};
  sc.score = score;
  return sc;
}

}  // namespace

// ============================================================================
// match_to_space
// ============================================================================

TEST_CASE("the central scan frame matches the space at the origin", "[gaze][slow]") {
  const auto& fx = fixture();
  const auto& central = fx.dataset.scan.frames[static_cast<size_t>(fx.dataset.scan.central_node)];
  const auto feats = features::extract(central.intensity, fx.cfg.extract);
  const auto scored = match_to_space(feats, fx.space, fx.cfg.consensus);
  REQUIRE(!scored.empty());
  const auto best = std::max_element(scored.begin(), scored.end(),
                                     [](const auto& a, const auto& b) { return a.score < b.score; });
  CHECK(std::abs(best->base.displacement().x) < 0.5);
  CHECK(std::abs(best->base.displacement().y) < 0.5);
}

TEST_CASE("a 2-degree frame lands 80.36 px from the space origin", "[gaze][slow]") {
  const auto& fx = fixture();
  const auto frame = phantom::render_frame(fx.dataset.retina, {2.0, 0.0}, fx.cfg.cal, {});
  const auto feats = features::extract(frame.intensity, fx.cfg.extract);
  const auto scored = match_to_space(feats, fx.space, fx.cfg.consensus);
  const auto est = estimate_gaze(scored, fx.tracker);
  REQUIRE(est.valid);
  CHECK(est.yaw == Approx(2.0).margin(0.03));
  CHECK(est.pitch == Approx(0.0).margin(0.03));

  const auto best = std::max_element(scored.begin(), scored.end(),
                                     [](const auto& a, const auto& b) { return a.score < b.score; });
  CHECK(best->base.displacement().x == Approx(80.36).margin(0.5));
  CHECK(best->base.displacement().y == Approx(0.0).margin(0.5));
}

TEST_CASE("a featureless frame cannot produce a valid estimate", "[gaze][slow]") {
  const auto& fx = fixture();
  phantom::Frame blank;
  blank.width = 253;
  blank.height = 207;
  blank.intensity = ImageD(253, 207, 0.5);
  const auto est = track_frame(blank, fx.space, fx.tracker);
  CHECK_FALSE(est.valid);
  CHECK(est.yaw == 0.0);
  CHECK(est.pitch == 0.0);
  CHECK(est.n_matches < fx.tracker.consensus.min_matches);
}

// ============================================================================
// estimate_gaze
// ============================================================================

TEST_CASE("a single correspondence at 40.18 px maps to exactly one degree", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 1;
  const std::vector<matching::ScoredCorrespondence> scored{scored_displacement(40.18, 0.0, 1.0)};
  const auto est = estimate_gaze(scored, cfg);
  REQUIRE(est.valid);
  CHECK(est.yaw == Approx(1.0).margin(1e-12));
  CHECK(est.pitch == Approx(0.0).margin(1e-12));
}

TEST_CASE("zero displacement maps to zero gaze", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 1;
  const std::vector<matching::ScoredCorrespondence> scored{scored_displacement(0.0, 0.0, 1.0)};
  const auto est = estimate_gaze(scored, cfg);
  REQUIRE(est.valid);
  CHECK(est.yaw == 0.0);
  CHECK(est.pitch == 0.0);
}

TEST_CASE("the estimate is the score-weighted displacement in degrees", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 2;
  const std::vector<matching::ScoredCorrespondence> scored{
      scored_displacement(40.18, 0.0, 1.0), scored_displacement(44.18, 0.0, 1.0)};
  const auto est = estimate_gaze(scored, cfg);
  REQUIRE(est.valid);
  CHECK(est.yaw == Approx(42.18 / 40.18).margin(1e-12));
  CHECK(est.n_matches == 2);
  CHECK(est.total_score == Approx(2.0));
}

TEST_CASE("positive pitch comes from negative image-y displacement", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 1;
  const std::vector<matching::ScoredCorrespondence> scored{scored_displacement(0.0, -40.17, 1.0)};
  const auto est = estimate_gaze(scored, cfg);
  REQUIRE(est.valid);
  CHECK(est.pitch == Approx(1.0).margin(1e-12));
}

TEST_CASE("matches below the retention cut are ignored", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 2;
  const std::vector<matching::ScoredCorrespondence> scored{
      scored_displacement(40.18, 0.0, 1.0), scored_displacement(40.18, 0.0, 0.9),
      scored_displacement(400.0, 0.0, 0.2)};
  const auto est = estimate_gaze(scored, cfg);
  REQUIRE(est.valid);
  CHECK(est.yaw == Approx(1.0).margin(1e-12));
  CHECK(est.n_matches == 2);
}

TEST_CASE("too few retained matches yields an in-band invalid estimate", "[gaze]") {
  TrackerConfig cfg;  // min_matches = 4
  const std::vector<matching::ScoredCorrespondence> scored{
      scored_displacement(40.18, 0.0, 1.0), scored_displacement(40.18, 0.0, 1.0)};
  const auto est = estimate_gaze(scored, cfg);
  CHECK_FALSE(est.valid);
  CHECK(est.yaw == 0.0);
}

TEST_CASE("the steering offset is purely additive on valid estimates", "[gaze]") {
  TrackerConfig cfg;
  cfg.consensus.min_matches = 1;
  cfg.cal.steering_offset = {0.35, -0.2};
  const std::vector<matching::ScoredCorrespondence> scored{scored_displacement(40.18, 40.17, 1.0)};

  const auto plain = estimate_gaze(scored, cfg);
  cfg.steering_enabled = true;
  const auto steered = estimate_gaze(scored, cfg);
  REQUIRE(plain.valid);
  REQUIRE(steered.valid);
  CHECK(steered.yaw == Approx(plain.yaw + 0.35).margin(1e-12));
  CHECK(steered.pitch == Approx(plain.pitch - 0.2).margin(1e-12));

  // Invalid estimates stay at zero even with steering enabled.
  const auto invalid = estimate_gaze({}, cfg);
  CHECK_FALSE(invalid.valid);
  CHECK(invalid.yaw == 0.0);
}

// ============================================================================
// track_sequence
// ============================================================================

TEST_CASE("tracking is stateless and order independent", "[gaze][slow]") {
  const auto& fx = fixture();
  Rng rng(61);
  std::vector<phantom::Frame> frames;
  for (int i = 0; i < 5; ++i) {
    frames.push_back(phantom::render_frame(fx.dataset.retina,
                                           {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)},
                                           fx.cfg.cal, fx.cfg.appearance.draw(rng), rng.next_u64()));
  }
  const auto estimates = track_sequence(frames, fx.space, fx.tracker);
  REQUIRE(estimates.size() == frames.size());

  // Elementwise equality with single-frame tracking.
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto single = track_frame(frames[i], fx.space, fx.tracker);
    CHECK(single.yaw == estimates[i].yaw);
    CHECK(single.pitch == estimates[i].pitch);
    CHECK(single.n_matches == estimates[i].n_matches);
  }

  // Permutation invariance.
  std::vector<phantom::Frame> reversed(frames.rbegin(), frames.rend());
  const auto rev_estimates = track_sequence(reversed, fx.space, fx.tracker);
  for (size_t i = 0; i < frames.size(); ++i) {
    CHECK(rev_estimates[frames.size() - 1 - i].yaw == estimates[i].yaw);
  }
}

TEST_CASE("estimated angle is linear in the true displacement", "[gaze][slow]") {
  const auto& fx = fixture();
  const auto f1 = phantom::render_frame(fx.dataset.retina, {1.0, -0.5}, fx.cfg.cal, {});
  const auto f2 = phantom::render_frame(fx.dataset.retina, {2.0, -1.0}, fx.cfg.cal, {});
  const auto e1 = track_frame(f1, fx.space, fx.tracker);
  const auto e2 = track_frame(f2, fx.space, fx.tracker);
  REQUIRE(e1.valid);
  REQUIRE(e2.valid);
  CHECK(e2.yaw == Approx(2.0 * e1.yaw).margin(0.04));
  CHECK(e2.pitch == Approx(2.0 * e1.pitch).margin(0.04));
}

TEST_CASE("central frames track to the origin", "[gaze][slow]") {
  const auto& fx = fixture();
  Rng rng(67);
  for (int i = 0; i < 3; ++i) {
    const auto frame = phantom::render_frame(fx.dataset.retina, {0.0, 0.0}, fx.cfg.cal,
                                             fx.cfg.appearance.draw(rng), rng.next_u64());
    const auto est = track_frame(frame, fx.space, fx.tracker);
    REQUIRE(est.valid);
    CHECK(std::abs(est.yaw) < 0.03);
    CHECK(std::abs(est.pitch) < 0.03);
  }
}

TEST_CASE("a short random sequence meets the accuracy envelope", "[gaze][slow]") {
  const auto& fx = fixture();
  Rng rng(71);
  std::vector<phantom::Frame> frames;
  std::vector<GazeAngle> truths;
  for (int i = 0; i < 30; ++i) {
    const GazeAngle g{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
    truths.push_back(g);
    frames.push_back(phantom::render_frame(fx.dataset.retina, g, fx.cfg.cal,
                                           fx.cfg.appearance.draw(rng), rng.next_u64()));
  }
  const auto estimates = track_sequence(frames, fx.space, fx.tracker);
  const auto collection = eval::collect_errors(estimates, truths);
  REQUIRE(collection.excluded == 0);
  const auto stats = eval::percentile_stats(collection.errors);
  INFO("mean " << stats.mean << " e95 " << stats.e95);
  CHECK(stats.e95 <= 0.45);
  CHECK(stats.mean <= 0.25);
}
