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

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "retrack/common.hpp"
#include "retrack/csv.hpp"
#include "retrack/features.hpp"
#include "retrack/matching.hpp"
#include "retrack/phantom.hpp"

namespace retrack::config {

/// Per-frame appearance jitter ranges; individual frames draw their
/// AppearanceParams from these.
struct AppearanceJitter {
  double gamma_jitter = 0.10;  // gamma = 1 +/- jitter, uniform
  double noise_std = 0.02;
  double blur_max = 0.5;  // blur sigma uniform in [0, blur_max]
  double vignette = 0.15;

  phantom::AppearanceParams draw(Rng& rng) const {
    phantom::AppearanceParams ap;
    ap.gamma = 1.0 + rng.uniform(-gamma_jitter, gamma_jitter);
    ap.noise_std = noise_std;
    ap.blur_sigma = rng.uniform(0.0, blur_max);
    ap.vignette_strength = vignette;
    return ap;
  }

  /// Midpoint of the jitter ranges, used for the scan frames.
  phantom::AppearanceParams nominal() const {
    phantom::AppearanceParams ap;
    ap.gamma = 1.0;
    ap.noise_std = noise_std;
    ap.blur_sigma = 0.5 * blur_max;
    ap.vignette_strength = vignette;
    return ap;
  }
};

struct TrialConfig {
  std::string pattern = "random";  // "random" or "grid"
  int frames = 100;
  bool steering = false;
};

/// Fully resolved run configuration. Everything a command does derives from
/// this plus the seed, so reruns are byte-identical.
struct RunConfig {
  uint64_t seed = 7;

  int phantom_width = 1200;
  int phantom_height = 1100;
  double vessel_density = 0.5;

  int frame_width = phantom::kDefaultFrameWidth;
  int frame_height = phantom::kDefaultFrameHeight;
  double range_deg = 5.0;
  Calibration cal{};

  int grid_rows = 5;
  int grid_cols = 5;
  double grid_spacing_deg = 2.5;

  AppearanceJitter appearance{};
  features::ExtractParams extract{.detector = {}, .enhance = {.enabled = true}};
  matching::ConsensusParams consensus{};

  std::vector<TrialConfig> trials{{"grid", 100, false}, {"random", 100, true}};

  std::vector<double> sim_noise_stds{1.0, 2.0, 5.0, 10.0};
  int sim_trials = 200;
  double sim_edge_noise_std = 0.5;
  int bench_frames = 100;

  void validate() const {
    try {
      cal.validate();
      consensus.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (phantom_width <= 0 || phantom_height <= 0 || frame_width <= 0 || frame_height <= 0) {
      throw ConfigError("config: dimensions must be positive");
    }
    if (vessel_density < 0.0 || vessel_density > 1.0) {
      throw ConfigError("config: phantom.vessel_density must be in [0,1]");
    }
    if (range_deg < 0.0) throw ConfigError("config: range_deg must be >= 0");
    if (grid_rows < 1 || grid_cols < 1) throw ConfigError("config: grid must be >= 1x1");
    if (grid_spacing_deg < 0.0) throw ConfigError("config: grid.spacing_deg must be >= 0");
    const double steer = std::max(std::abs(cal.steering_offset.yaw),
                                  std::abs(cal.steering_offset.pitch));
    const double reach_deg =
        std::max(range_deg + steer, (std::max(grid_rows, grid_cols) - 1) / 2.0 * grid_spacing_deg);
    const double need_w = frame_width + 2.0 * reach_deg * cal.ppd_x;
    const double need_h = frame_height + 2.0 * reach_deg * cal.ppd_y;
    if (phantom_width < need_w || phantom_height < need_h) {
      throw ConfigError("config: phantom too small for gaze range/grid (need >= " +
                        std::to_string(static_cast<int>(std::ceil(need_w))) + "x" +
                        std::to_string(static_cast<int>(std::ceil(need_h))) + ")");
    }
    if (extract.detector.nms_window < 1 || extract.detector.nms_window % 2 == 0) {
      throw ConfigError("config: detector.nms_window must be odd");
    }
    if (extract.detector.threshold < 0.0 || extract.detector.threshold > 1.0) {
      throw ConfigError("config: detector.threshold must be in [0,1]");
    }
    for (const auto& t : trials) {
      if (t.pattern != "random" && t.pattern != "grid") {
        throw ConfigError("config: trial pattern must be 'random' or 'grid'");
      }
      if (t.frames < 1) throw ConfigError("config: trial frames must be >= 1");
    }
    if (sim_trials < 30) throw ConfigError("config: sim.trials must be >= 30");
    if (bench_frames < 1) throw ConfigError("config: bench.frames must be >= 1");
  }
};

// ============================================================================
// Parsing
// ============================================================================

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  const auto end = s.find_last_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) {
    const std::string s = get_str(key, "");
    if (s.empty()) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: bad number for " + key + ": '" + s + "'");
    }
  }

  int get_int(const std::string& key, int fallback) {
    const std::string s = get_str(key, "");
    if (s.empty()) return fallback;
    try {
      size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<int>(v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad integer for " + key + ": '" + s + "'");
    }
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) {
    const std::string s = get_str(key, "");
    if (s.empty()) return fallback;
    try {
      size_t pos = 0;
      const uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: bad seed for " + key + ": '" + s + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    const std::string s = get_str(key, "");
    if (s.empty()) return fallback;
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + s + "'");
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) {
    const std::string s = get_str(key, "");
    if (s.empty()) return fallback;
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config: bad list element for " + key + ": '" + item + "'");
      }
    }
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
  }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). Later assignments win,
/// so command-line overrides are applied by appending.
inline detail::KeyValues parse_key_values(const std::string& text) {
  detail::KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(line_no));
    kv.set(key, value);
  }
  return kv;
}

inline RunConfig from_key_values(detail::KeyValues kv) {
  if (!kv.has("seed")) {
    throw ConfigError("config: 'seed' is mandatory (reproducibility requires explicit seeds)");
  }
  RunConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.phantom_width = kv.get_int("phantom.width", c.phantom_width);
  c.phantom_height = kv.get_int("phantom.height", c.phantom_height);
  c.vessel_density = kv.get_double("phantom.vessel_density", c.vessel_density);
  c.frame_width = kv.get_int("frame.width", c.frame_width);
  c.frame_height = kv.get_int("frame.height", c.frame_height);
  c.range_deg = kv.get_double("range_deg", c.range_deg);
  c.cal.ppd_x = kv.get_double("cal.ppd_x", c.cal.ppd_x);
  c.cal.ppd_y = kv.get_double("cal.ppd_y", c.cal.ppd_y);
  c.cal.steering_offset.yaw = kv.get_double("cal.steering_yaw", c.cal.steering_offset.yaw);
  c.cal.steering_offset.pitch = kv.get_double("cal.steering_pitch", c.cal.steering_offset.pitch);
  c.grid_rows = kv.get_int("grid.rows", c.grid_rows);
  c.grid_cols = kv.get_int("grid.cols", c.grid_cols);
  c.grid_spacing_deg = kv.get_double("grid.spacing_deg", c.grid_spacing_deg);
  c.appearance.gamma_jitter = kv.get_double("appearance.gamma_jitter", c.appearance.gamma_jitter);
  c.appearance.noise_std = kv.get_double("appearance.noise_std", c.appearance.noise_std);
  c.appearance.blur_max = kv.get_double("appearance.blur_max", c.appearance.blur_max);
  c.appearance.vignette = kv.get_double("appearance.vignette", c.appearance.vignette);
  c.extract.detector.nms_window = kv.get_int("detector.nms_window", c.extract.detector.nms_window);
  c.extract.detector.threshold = kv.get_double("detector.threshold", c.extract.detector.threshold);
  c.extract.detector.max_keypoints =
      kv.get_int("detector.max_keypoints", c.extract.detector.max_keypoints);
  c.extract.enhance.enabled = kv.get_bool("enhance.enabled", c.extract.enhance.enabled);
  c.extract.enhance.kappa = kv.get_double("enhance.kappa", c.extract.enhance.kappa);
  c.extract.enhance.iterations = kv.get_int("enhance.iterations", c.extract.enhance.iterations);
  c.extract.enhance.local_mean_sigma =
      kv.get_double("enhance.local_mean_sigma", c.extract.enhance.local_mean_sigma);
  c.consensus.tau = kv.get_double("consensus.tau", c.consensus.tau);
  c.consensus.min_matches = kv.get_int("consensus.min_matches", c.consensus.min_matches);
  c.consensus.inlier_cut = kv.get_double("consensus.inlier_cut", c.consensus.inlier_cut);

  const int n_trials = kv.get_int("trials", static_cast<int>(c.trials.size()));
  if (n_trials < 0) throw ConfigError("config: trials must be >= 0");
  if (kv.has("trials") || n_trials != static_cast<int>(c.trials.size())) {
    c.trials.resize(static_cast<size_t>(n_trials));
  }
  for (int t = 0; t < n_trials; ++t) {
    auto& trial = c.trials[static_cast<size_t>(t)];
    const std::string prefix = "trial." + std::to_string(t) + ".";
    trial.pattern = kv.get_str(prefix + "pattern", trial.pattern);
    trial.frames = kv.get_int(prefix + "frames", trial.frames);
    trial.steering = kv.get_bool(prefix + "steering", trial.steering);
  }

  c.sim_noise_stds = kv.get_double_list("sim.noise_stds", c.sim_noise_stds);
  c.sim_trials = kv.get_int("sim.trials", c.sim_trials);
  c.sim_edge_noise_std = kv.get_double("sim.edge_noise_std", c.sim_edge_noise_std);
  c.bench_frames = kv.get_int("bench.frames", c.bench_frames);
  c.validate();
  return c;
}

inline RunConfig load(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  for (const auto& o : overrides) {
    if (o.find('=') == std::string::npos) {
      throw ConfigError("config: override must be key=value, got '" + o + "'");
    }
    text += "\n" + o;
  }
  return from_key_values(parse_key_values(text));
}

/// Canonical echo of a resolved configuration; written into every run
/// directory so results are traceable to their exact inputs.
inline std::string serialize(const RunConfig& c) {
  std::ostringstream out;
  const auto d = [](double v) { return csv::fmt(v, 17); };
  out << "seed = " << c.seed << "\n";
  out << "phantom.width = " << c.phantom_width << "\n";
  out << "phantom.height = " << c.phantom_height << "\n";
  out << "phantom.vessel_density = " << d(c.vessel_density) << "\n";
  out << "frame.width = " << c.frame_width << "\n";
  out << "frame.height = " << c.frame_height << "\n";
  out << "range_deg = " << d(c.range_deg) << "\n";
  out << "cal.ppd_x = " << d(c.cal.ppd_x) << "\n";
  out << "cal.ppd_y = " << d(c.cal.ppd_y) << "\n";
  out << "cal.steering_yaw = " << d(c.cal.steering_offset.yaw) << "\n";
  out << "cal.steering_pitch = " << d(c.cal.steering_offset.pitch) << "\n";
  out << "grid.rows = " << c.grid_rows << "\n";
  out << "grid.cols = " << c.grid_cols << "\n";
  out << "grid.spacing_deg = " << d(c.grid_spacing_deg) << "\n";
  out << "appearance.gamma_jitter = " << d(c.appearance.gamma_jitter) << "\n";
  out << "appearance.noise_std = " << d(c.appearance.noise_std) << "\n";
  out << "appearance.blur_max = " << d(c.appearance.blur_max) << "\n";
  out << "appearance.vignette = " << d(c.appearance.vignette) << "\n";
  out << "detector.nms_window = " << c.extract.detector.nms_window << "\n";
  out << "detector.threshold = " << d(c.extract.detector.threshold) << "\n";
  out << "detector.max_keypoints = " << c.extract.detector.max_keypoints << "\n";
  out << "enhance.enabled = " << (c.extract.enhance.enabled ? "true" : "false") << "\n";
  out << "enhance.kappa = " << d(c.extract.enhance.kappa) << "\n";
  out << "enhance.iterations = " << c.extract.enhance.iterations << "\n";
  out << "enhance.local_mean_sigma = " << d(c.extract.enhance.local_mean_sigma) << "\n";
  out << "consensus.tau = " << d(c.consensus.tau) << "\n";
  out << "consensus.min_matches = " << c.consensus.min_matches << "\n";
  out << "consensus.inlier_cut = " << d(c.consensus.inlier_cut) << "\n";
  out << "trials = " << c.trials.size() << "\n";
  for (size_t t = 0; t < c.trials.size(); ++t) {
    out << "trial." << t << ".pattern = " << c.trials[t].pattern << "\n";
    out << "trial." << t << ".frames = " << c.trials[t].frames << "\n";
    out << "trial." << t << ".steering = " << (c.trials[t].steering ? "true" : "false") << "\n";
  }
  out << "sim.noise_stds = ";
  for (size_t i = 0; i < c.sim_noise_stds.size(); ++i) {
    if (i) out << ",";
    out << d(c.sim_noise_stds[i]);
  }
  out << "\n";
  out << "sim.trials = " << c.sim_trials << "\n";
  out << "sim.edge_noise_std = " << d(c.sim_edge_noise_std) << "\n";
  out << "bench.frames = " << c.bench_frames << "\n";
  return out.str();
}

}  // namespace retrack::config
