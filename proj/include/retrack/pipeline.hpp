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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "retrack/canonical.hpp"
#include "retrack/config.hpp"
#include "retrack/csv.hpp"
#include "retrack/eval.hpp"
#include "retrack/gaze.hpp"
#include "retrack/pgm.hpp"
#include "retrack/phantom.hpp"

namespace retrack::pipeline {

inline constexpr int kManifestVersion = 1;

// Seed-stream salts, so each pipeline stage draws independent randomness from
// the one master seed.
inline constexpr uint64_t kScanSalt = 0x5CA11ull;
inline constexpr uint64_t kTrialSalt = 0x7121A1ull;

struct TrialData {
  config::TrialConfig cfg;
  std::vector<phantom::Frame> frames;
  std::vector<phantom::AppearanceParams> appearance;  // parallel to frames
};

struct Dataset {
  phantom::RetinaPhantom retina;
  phantom::GridScan scan;
  std::vector<TrialData> trials;
};

// ============================================================================
// Dataset generation
// ============================================================================

/// Gaze targets for one trial: uniform draws over the +/-range square, or a
/// 5x5 rectangle-grid pattern cycled in row-major order.
inline std::vector<GazeAngle> trial_gaze_targets(const config::TrialConfig& trial,
                                                 double range_deg, Rng& rng) {
  std::vector<GazeAngle> targets;
  targets.reserve(static_cast<size_t>(trial.frames));
  if (trial.pattern == "random") {
    for (int i = 0; i < trial.frames; ++i) {
      targets.push_back({rng.uniform(-range_deg, range_deg), rng.uniform(-range_deg, range_deg)});
    }
  } else {  // "grid"
    constexpr int kTargets = 5;
    for (int i = 0; i < trial.frames; ++i) {
      const int cell = i % (kTargets * kTargets);
      const int r = cell / kTargets;
      const int c = cell % kTargets;
      targets.push_back(
          phantom::grid_node_gaze(r, c, kTargets, kTargets, 2.0 * range_deg / (kTargets - 1)));
    }
  }
  return targets;
}

/// Generates the full in-memory dataset: phantom retina, grid scan (nominal
/// appearance), and the configured test trials (jittered appearance). With
/// pupil steering the frame is rendered at gaze minus the steering offset;
/// the tracker adds the offset back.
inline Dataset generate_dataset(const config::RunConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.retina = phantom::generate_phantom(
      cfg.seed, cfg.vessel_density, cfg.phantom_width, cfg.phantom_height,
      {cfg.frame_width, cfg.frame_height, cfg.range_deg, cfg.cal});
  ds.scan = phantom::grid_scan(ds.retina, cfg.cal, cfg.appearance.nominal(), cfg.grid_rows,
                               cfg.grid_cols, cfg.grid_spacing_deg, cfg.seed ^ kScanSalt,
                               cfg.frame_width, cfg.frame_height);

  for (size_t t = 0; t < cfg.trials.size(); ++t) {
    const auto& trial_cfg = cfg.trials[t];
    Rng rng(cfg.seed ^ (kTrialSalt + 0x100ull * (t + 1)));
    TrialData trial{trial_cfg, {}, {}};
    const auto targets = trial_gaze_targets(trial_cfg, cfg.range_deg, rng);
    trial.frames.reserve(targets.size());
    for (const GazeAngle& target : targets) {
      GazeAngle rendered = target;
      if (trial_cfg.steering) {
        rendered.yaw -= cfg.cal.steering_offset.yaw;
        rendered.pitch -= cfg.cal.steering_offset.pitch;
      }
      const auto ap = cfg.appearance.draw(rng);
      auto frame = phantom::render_frame(ds.retina, rendered, cfg.cal, ap, rng.next_u64(),
                                         cfg.frame_width, cfg.frame_height);
      frame.true_gaze = target;  // ground truth is the commanded target
      trial.frames.push_back(std::move(frame));
      trial.appearance.push_back(ap);
    }
    ds.trials.push_back(std::move(trial));
  }
  return ds;
}

// ============================================================================
// Dataset persistence (PGM frames + JSON manifest)
// ============================================================================

namespace detail {

inline std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const config::RunConfig& cfg,
                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scan");
  write_pgm(ds.retina.intensity, dir / "phantom.pgm");

  nlohmann::ordered_json manifest;
  manifest["version"] = kManifestVersion;
  manifest["calibration"] = {{"ppd_x", cfg.cal.ppd_x},
                             {"ppd_y", cfg.cal.ppd_y},
                             {"steering_yaw", cfg.cal.steering_offset.yaw},
                             {"steering_pitch", cfg.cal.steering_offset.pitch}};
  manifest["frame"] = {{"width", cfg.frame_width}, {"height", cfg.frame_height}};
  manifest["phantom"] = {{"path", "phantom.pgm"},
                         {"seed", ds.retina.texture_seed},
                         {"vessel_density", ds.retina.vessel_density}};

  const auto scan_ap = cfg.appearance.nominal();
  nlohmann::ordered_json scan;
  scan["rows"] = ds.scan.rows;
  scan["cols"] = ds.scan.cols;
  scan["spacing_deg"] = ds.scan.spacing_deg;
  scan["central_node"] = ds.scan.central_node;
  scan["appearance"] = {{"gamma", scan_ap.gamma},
                        {"noise_std", scan_ap.noise_std},
                        {"blur_sigma", scan_ap.blur_sigma},
                        {"vignette_strength", scan_ap.vignette_strength}};
  auto& adjacency = scan["adjacency"] = nlohmann::ordered_json::array();
  for (const auto& [u, v] : ds.scan.adjacency) adjacency.push_back({u, v});
  auto& scan_frames = scan["frames"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < ds.scan.frames.size(); ++i) {
    const auto& f = ds.scan.frames[i];
    const std::string rel = "scan/node_" + detail::zero_pad(static_cast<int>(i), 3) + ".pgm";
    write_pgm(f.intensity, dir / rel);
    scan_frames.push_back({{"node", i},
                           {"path", rel},
                           {"yaw", f.true_gaze->yaw},
                           {"pitch", f.true_gaze->pitch}});
  }
  manifest["scan"] = std::move(scan);

  auto& trials = manifest["trials"] = nlohmann::ordered_json::array();
  for (size_t t = 0; t < ds.trials.size(); ++t) {
    const auto& trial = ds.trials[t];
    const std::string trial_dir = "trials/trial_" + std::to_string(t);
    fs::create_directories(dir / trial_dir);
    nlohmann::ordered_json jt;
    jt["id"] = t;
    jt["pattern"] = trial.cfg.pattern;
    jt["steering"] = trial.cfg.steering;
    auto& frames = jt["frames"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < trial.frames.size(); ++i) {
      const auto& f = trial.frames[i];
      const auto& ap = trial.appearance[i];
      const std::string rel = trial_dir + "/frame_" + detail::zero_pad(static_cast<int>(i), 4) + ".pgm";
      write_pgm(f.intensity, dir / rel);
      frames.push_back({{"path", rel},
                        {"yaw", f.true_gaze->yaw},
                        {"pitch", f.true_gaze->pitch},
                        {"gamma", ap.gamma},
                        {"noise_std", ap.noise_std},
                        {"blur_sigma", ap.blur_sigma},
                        {"vignette_strength", ap.vignette_strength}});
    }
    trials.push_back(std::move(jt));
  }

  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("write_dataset: cannot open manifest");
  out << manifest.dump(2) << "\n";
}

struct LoadedDataset {
  Calibration cal;
  int frame_width = 0;
  int frame_height = 0;
  phantom::GridScan scan;  // frames loaded from PGM
  std::vector<TrialData> trials;
};

inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("load_dataset: cannot open manifest in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError(std::string("load_dataset: manifest: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kManifestVersion) {
      throw MalformedFileError("load_dataset: unsupported manifest version");
    }
    LoadedDataset ds;
    ds.cal.ppd_x = j.at("calibration").at("ppd_x").get<double>();
    ds.cal.ppd_y = j.at("calibration").at("ppd_y").get<double>();
    ds.cal.steering_offset.yaw = j.at("calibration").at("steering_yaw").get<double>();
    ds.cal.steering_offset.pitch = j.at("calibration").at("steering_pitch").get<double>();
    ds.frame_width = j.at("frame").at("width").get<int>();
    ds.frame_height = j.at("frame").at("height").get<int>();

    const auto& scan = j.at("scan");
    ds.scan.rows = scan.at("rows").get<int>();
    ds.scan.cols = scan.at("cols").get<int>();
    ds.scan.spacing_deg = scan.at("spacing_deg").get<double>();
    ds.scan.central_node = scan.at("central_node").get<int>();
    for (const auto& e : scan.at("adjacency")) {
      ds.scan.adjacency.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    for (const auto& jf : scan.at("frames")) {
      phantom::Frame f;
      f.intensity = read_pgm(dir / jf.at("path").get<std::string>());
      f.width = f.intensity.width();
      f.height = f.intensity.height();
      f.true_gaze = GazeAngle{jf.at("yaw").get<double>(), jf.at("pitch").get<double>()};
      ds.scan.frames.push_back(std::move(f));
    }

    for (const auto& jt : j.at("trials")) {
      TrialData trial;
      trial.cfg.pattern = jt.at("pattern").get<std::string>();
      trial.cfg.steering = jt.at("steering").get<bool>();
      for (const auto& jf : jt.at("frames")) {
        phantom::Frame f;
        f.intensity = read_pgm(dir / jf.at("path").get<std::string>());
        f.width = f.intensity.width();
        f.height = f.intensity.height();
        f.true_gaze = GazeAngle{jf.at("yaw").get<double>(), jf.at("pitch").get<double>()};
        trial.frames.push_back(std::move(f));
        phantom::AppearanceParams ap;
        ap.gamma = jf.at("gamma").get<double>();
        ap.noise_std = jf.at("noise_std").get<double>();
        ap.blur_sigma = jf.at("blur_sigma").get<double>();
        ap.vignette_strength = jf.at("vignette_strength").get<double>();
        trial.appearance.push_back(ap);
      }
      trial.cfg.frames = static_cast<int>(trial.frames.size());
      ds.trials.push_back(std::move(trial));
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError(std::string("load_dataset: manifest: ") + e.what());
  }
}

// ============================================================================
// Space construction
// ============================================================================

struct SpaceBuildReport {
  canonical::CanonicalFeatureSpace space;
  std::vector<int> failed_edges;
  int measurement_count = 0;
  int entry_count = 0;
  double build_seconds = 0.0;
};

inline SpaceBuildReport build_space(std::span<const phantom::Frame> scan_frames,
                                    const canonical::GridGraph& graph,
                                    const config::RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<features::FeatureSet> feats;
  feats.reserve(scan_frames.size());
  for (size_t i = 0; i < scan_frames.size(); ++i) {
    auto f = features::extract(scan_frames[i].intensity, cfg.extract);
    f.source_id = static_cast<int>(i);
    feats.push_back(std::move(f));
  }
  auto registration = canonical::register_all_edges(graph, feats, cfg.consensus);
  const auto positions = canonical::bundle_adjust(graph, registration.measurements);
  SpaceBuildReport report;
  report.space = canonical::assemble_space(feats, registration.measurements, graph, positions,
                                           cfg.frame_width, cfg.frame_height, cfg.cal);
  report.failed_edges = std::move(registration.failed_edges);
  report.measurement_count = static_cast<int>(registration.measurements.size());
  report.entry_count = static_cast<int>(report.space.entries.size());
  report.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline canonical::GridGraph graph_from_scan(const phantom::GridScan& scan) {
  return {static_cast<int>(scan.frames.size()), scan.adjacency, scan.central_node};
}

// ============================================================================
// Tracking results
// ============================================================================

struct TrackRow {
  int frame_id = 0;
  gaze::GazeEstimate est;
  GazeAngle truth;
};

inline std::vector<TrackRow> track_trial(std::span<const phantom::Frame> frames,
                                         const canonical::CanonicalFeatureSpace& space,
                                         const gaze::TrackerConfig& tracker) {
  std::vector<TrackRow> rows;
  rows.reserve(frames.size());
  const auto estimates = gaze::track_sequence(frames, space, tracker);
  for (size_t i = 0; i < frames.size(); ++i) {
    rows.push_back({static_cast<int>(i), estimates[i],
                    frames[i].true_gaze.value_or(GazeAngle{0.0, 0.0})});
  }
  return rows;
}

inline void write_results_csv(std::span<const TrackRow> rows, const std::filesystem::path& path) {
  csv::Table t;
  t.header = {"frame_id", "yaw_est",    "pitch_est",   "yaw_true", "pitch_true",
              "n_matches", "total_score", "valid"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.frame_id), csv::fmt(r.est.yaw, 12),
                      csv::fmt(r.est.pitch, 12), csv::fmt(r.truth.yaw, 12),
                      csv::fmt(r.truth.pitch, 12), std::to_string(r.est.n_matches),
                      csv::fmt(r.est.total_score, 12), r.est.valid ? "1" : "0"});
  }
  t.write(path);
}

inline std::vector<TrackRow> read_results_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const int c_id = csv::column_index(t, "frame_id");
  const int c_yaw = csv::column_index(t, "yaw_est");
  const int c_pitch = csv::column_index(t, "pitch_est");
  const int c_yaw_true = csv::column_index(t, "yaw_true");
  const int c_pitch_true = csv::column_index(t, "pitch_true");
  const int c_matches = csv::column_index(t, "n_matches");
  const int c_score = csv::column_index(t, "total_score");
  const int c_valid = csv::column_index(t, "valid");
  std::vector<TrackRow> rows;
  for (const auto& r : t.rows) {
    TrackRow row;
    row.frame_id = std::stoi(r[static_cast<size_t>(c_id)]);
    row.est.yaw = std::stod(r[static_cast<size_t>(c_yaw)]);
    row.est.pitch = std::stod(r[static_cast<size_t>(c_pitch)]);
    row.truth.yaw = std::stod(r[static_cast<size_t>(c_yaw_true)]);
    row.truth.pitch = std::stod(r[static_cast<size_t>(c_pitch_true)]);
    row.est.n_matches = std::stoi(r[static_cast<size_t>(c_matches)]);
    row.est.total_score = std::stod(r[static_cast<size_t>(c_score)]);
    row.est.valid = r[static_cast<size_t>(c_valid)] == "1";
    rows.push_back(row);
  }
  return rows;
}

inline eval::ErrorCollection collect_row_errors(std::span<const TrackRow> rows) {
  std::vector<gaze::GazeEstimate> estimates;
  std::vector<GazeAngle> truths;
  estimates.reserve(rows.size());
  truths.reserve(rows.size());
  for (const auto& r : rows) {
    estimates.push_back(r.est);
    truths.push_back(r.truth);
  }
  return eval::collect_errors(estimates, truths);
}

}  // namespace retrack::pipeline
