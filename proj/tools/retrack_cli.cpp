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
//
// retrack: phantom-retina eye-tracking experiments from the command line.
//
//   retrack phantom     --config cfg --out DIR        synthetic dataset
//   retrack build-space --config cfg --dataset DIR --out FILE
//   retrack track       --config cfg --space FILE --dataset DIR --trial N --out FILE
//   retrack eval        --results FILE... --out-dir DIR
//   retrack simulate    --config cfg --kind noise|edge-removal --out FILE
//   retrack bench       --config cfg --space FILE --dataset DIR --out FILE
//
// Exit codes: 0 success, 2 configuration/usage error, 3 pipeline failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "retrack/retrack.hpp"

namespace fs = std::filesystem;
using namespace retrack;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
}

void echo_config(const config::RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "config_resolved.cfg", config::serialize(cfg));
}

gaze::TrackerConfig tracker_from(const config::RunConfig& cfg, const Calibration& cal,
                                 bool steering) {
  gaze::TrackerConfig tracker;
  tracker.cal = cal;
  tracker.consensus = cfg.consensus;
  tracker.extract = cfg.extract;
  tracker.steering_enabled = steering;
  return tracker;
}

int cmd_phantom(const config::RunConfig& cfg, const fs::path& out_dir) {
  const auto dataset = pipeline::generate_dataset(cfg);
  fs::create_directories(out_dir);
  pipeline::write_dataset(dataset, cfg, out_dir);
  echo_config(cfg, out_dir);
  std::cout << "phantom: wrote " << dataset.scan.frames.size() << " scan frames and "
            << dataset.trials.size() << " trial(s) to " << out_dir.string() << "\n";
  return 0;
}

int cmd_build_space(const config::RunConfig& cfg, const fs::path& dataset_dir,
                    const fs::path& out_file, const fs::path& dump_features_dir) {
  const auto dataset = pipeline::load_dataset(dataset_dir);
  const auto graph = pipeline::graph_from_scan(dataset.scan);
  const auto report = pipeline::build_space(dataset.scan.frames, graph, cfg);
  if (!dump_features_dir.empty()) {
    fs::create_directories(dump_features_dir);
    for (size_t i = 0; i < dataset.scan.frames.size(); ++i) {
      const auto feats = features::extract(dataset.scan.frames[i].intensity, cfg.extract);
      char name[32];
      std::snprintf(name, sizeof(name), "features_node_%03zu.csv", i);
      features::write_feature_csv(feats, dump_features_dir / name);
    }
  }
  canonical::save_space(report.space, out_file);
  echo_config(cfg, out_file.parent_path().empty() ? "." : out_file.parent_path());
  std::cout << "build-space: " << report.measurement_count << "/" << graph.edges.size()
            << " edges registered, " << report.entry_count << " canonical entries, "
            << csv::fmt(report.build_seconds, 3) << " s\n";
  if (!report.failed_edges.empty()) {
    std::cout << "build-space: dropped edges:";
    for (const int e : report.failed_edges) std::cout << " " << e;
    std::cout << "\n";
  }
  return 0;
}

int cmd_track(const config::RunConfig& cfg, const fs::path& space_file,
              const fs::path& dataset_dir, int trial_index, const fs::path& out_file) {
  const auto dataset = pipeline::load_dataset(dataset_dir);
  if (trial_index < 0 || trial_index >= static_cast<int>(dataset.trials.size())) {
    throw ConfigError("track: trial index out of range (dataset has " +
                      std::to_string(dataset.trials.size()) + " trials)");
  }
  const auto space = canonical::load_space(space_file);
  const auto& trial = dataset.trials[static_cast<size_t>(trial_index)];
  const auto tracker = tracker_from(cfg, dataset.cal, trial.cfg.steering);
  const auto rows = pipeline::track_trial(trial.frames, space, tracker);
  pipeline::write_results_csv(rows, out_file);
  echo_config(cfg, out_file.parent_path().empty() ? "." : out_file.parent_path());

  const auto errors = pipeline::collect_row_errors(rows);
  std::cout << "track: " << rows.size() << " frames, " << errors.excluded << " invalid\n";
  if (!errors.errors.empty()) {
    const auto stats = eval::percentile_stats(errors.errors);
    std::cout << "track: mean " << csv::fmt(stats.mean, 4) << " deg, e95 "
              << csv::fmt(stats.e95, 4) << " deg\n";
  }
  return 0;
}

int cmd_eval(const std::vector<fs::path>& results_files, const fs::path& out_dir) {
  if (results_files.empty()) throw ConfigError("eval: at least one --results file required");
  fs::create_directories(out_dir);

  csv::Table stats_table;
  stats_table.header = {"scope", "count", "excluded", "mean_deg", "std_deg",
                        "e50_deg", "e75_deg", "e95_deg"};
  std::vector<eval::ErrorStats> per_trial;
  std::vector<double> all_errors;
  int all_excluded = 0;

  for (const auto& file : results_files) {
    const auto rows = pipeline::read_results_csv(file);
    const auto errors = pipeline::collect_row_errors(rows);
    all_excluded += errors.excluded;
    all_errors.insert(all_errors.end(), errors.errors.begin(), errors.errors.end());
    if (errors.errors.empty()) {
      throw Error("eval: no valid estimates in " + file.string());
    }
    const auto stats = eval::percentile_stats(errors.errors);
    per_trial.push_back(stats);
    stats_table.rows.push_back({file.stem().string(), std::to_string(stats.count),
                                std::to_string(errors.excluded), csv::fmt(stats.mean, 9),
                                csv::fmt(stats.stddev, 9), csv::fmt(stats.e50, 9),
                                csv::fmt(stats.e75, 9), csv::fmt(stats.e95, 9)});
  }
  const auto overall = eval::percentile_stats(all_errors);
  stats_table.rows.push_back({"overall", std::to_string(overall.count),
                              std::to_string(all_excluded), csv::fmt(overall.mean, 9),
                              csv::fmt(overall.stddev, 9), csv::fmt(overall.e50, 9),
                              csv::fmt(overall.e75, 9), csv::fmt(overall.e95, 9)});
  stats_table.write(out_dir / "stats.csv");

  std::vector<double> thresholds;
  for (int i = 0; i <= 50; ++i) thresholds.push_back(0.02 * i);
  const auto curve = eval::coverage_curve(per_trial, thresholds);
  csv::Table coverage_table;
  coverage_table.header = {"threshold_deg", "fraction_mean_within", "fraction_e95_within"};
  svg::Series mean_series{"mean", "#1f77b4", {}, {}};
  svg::Series e95_series{"e95", "#d62728", {}, {}};
  for (const auto& pt : curve) {
    coverage_table.rows.push_back({csv::fmt(pt.threshold_deg, 9),
                                   csv::fmt(pt.fraction_mean_within, 9),
                                   csv::fmt(pt.fraction_e95_within, 9)});
    mean_series.x.push_back(pt.threshold_deg);
    mean_series.y.push_back(pt.fraction_mean_within);
    e95_series.x.push_back(pt.threshold_deg);
    e95_series.y.push_back(pt.fraction_e95_within);
  }
  coverage_table.write(out_dir / "coverage.csv");
  svg::write_line_chart(out_dir / "coverage.svg", "Population coverage", "error threshold (deg)",
                        "fraction of trials", {mean_series, e95_series});

  std::cout << "eval: overall mean " << csv::fmt(overall.mean, 4) << " deg, e95 "
            << csv::fmt(overall.e95, 4) << " deg over " << overall.count << " frames ("
            << all_excluded << " invalid)\n";
  return 0;
}

int cmd_simulate(const config::RunConfig& cfg, const std::string& kind, const fs::path& out_file) {
  if (kind == "noise") {
    const auto rows =
        eval::robustness_noise_sim(cfg.grid_rows, cfg.grid_cols, cfg.grid_spacing_deg, cfg.cal,
                                   cfg.sim_noise_stds, cfg.sim_trials, cfg.seed);
    csv::Table t;
    t.header = {"noise_std_px", "max_node_error_mean_deg", "max_node_error_std_deg", "trials"};
    svg::Series series{"max node error", "#1f77b4", {}, {}};
    for (const auto& r : rows) {
      t.rows.push_back({csv::fmt(r.noise_std_px, 9), csv::fmt(r.max_node_error_mean_deg, 9),
                        csv::fmt(r.max_node_error_std_deg, 9), std::to_string(r.trials)});
      series.x.push_back(r.noise_std_px);
      series.y.push_back(r.max_node_error_mean_deg);
    }
    t.write(out_file);
    svg::write_line_chart(out_file.string() + ".svg", "Edge-noise robustness",
                          "pairwise noise std (px)", "max node error (deg)", {series});
  } else if (kind == "edge-removal") {
    const auto grid = eval::make_exact_grid(cfg.grid_rows, cfg.grid_cols,
                                                    cfg.grid_spacing_deg, cfg.cal);
    auto measurements = grid.measurements;
    Rng rng(cfg.seed);
    for (auto& m : measurements) {
      m.mu.dx += rng.gaussian(0.0, cfg.sim_edge_noise_std);
      m.mu.dy += rng.gaussian(0.0, cfg.sim_edge_noise_std);
    }
    const auto rows = eval::edge_removal_sim(grid.graph, measurements, cfg.cal);
    csv::Table t;
    t.header = {"edge_index", "from_node", "to_node", "connected_after_removal",
                "max_node_shift_deg"};
    for (const auto& r : rows) {
      const auto [from, to] = grid.graph.edges[static_cast<size_t>(r.edge_index)];
      t.rows.push_back({std::to_string(r.edge_index), std::to_string(from), std::to_string(to),
                        r.connected_after_removal ? "1" : "0",
                        csv::fmt(r.max_node_shift_deg, 9)});
    }
    t.write(out_file);
  } else {
    throw ConfigError("simulate: unknown kind '" + kind + "' (use noise or edge-removal)");
  }
  echo_config(cfg, out_file.parent_path().empty() ? "." : out_file.parent_path());
  std::cout << "simulate " << kind << ": wrote " << out_file.string() << "\n";
  return 0;
}

int cmd_bench(const config::RunConfig& cfg, const fs::path& space_file,
              const fs::path& dataset_dir, const fs::path& out_file) {
  const auto dataset = pipeline::load_dataset(dataset_dir);
  if (dataset.trials.empty()) throw Error("bench: dataset has no trials");
  const auto space = canonical::load_space(space_file);

  std::vector<phantom::Frame> frames;
  const auto& source = dataset.trials[0].frames;
  for (int i = 0; i < cfg.bench_frames; ++i) {
    frames.push_back(source[static_cast<size_t>(i) % source.size()]);
  }
  const auto tracker = tracker_from(cfg, dataset.cal, dataset.trials[0].cfg.steering);
  const auto result = eval::bench_stages(frames, space, tracker);

  csv::Table t;
  t.header = {"stage", "mean_ms"};
  double stage_sum = 0.0;
  for (const auto& s : result.stages) {
    t.rows.push_back({s.stage, csv::fmt(s.mean_ms, 6)});
    stage_sum += s.mean_ms;
  }
  t.rows.push_back({"total", csv::fmt(result.total_mean_ms, 6)});
  t.write(out_file);
  std::cout << "bench: " << result.frames << " frames, total " << csv::fmt(result.total_mean_ms, 4)
            << " ms/frame (stages " << csv::fmt(stage_sum, 4) << " ms), "
            << csv::fmt(1000.0 / result.total_mean_ms, 4) << " fps\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrack: retinal eye-tracking pipeline at desk scale"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path;
  std::string dataset_dir;
  std::string space_file;
  std::vector<std::string> results_files;
  std::string sim_kind;
  std::string dump_features_dir;
  int trial_index = 0;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--set", overrides, "override config entries (key=value)");
  };

  auto* phantom_cmd = app.add_subcommand("phantom", "generate the synthetic dataset");
  add_config(phantom_cmd);
  phantom_cmd->add_option("--out", out_path, "output dataset directory")->required();

  auto* build_cmd = app.add_subcommand("build-space", "construct the canonical feature space");
  add_config(build_cmd);
  build_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  build_cmd->add_option("--out", out_path, "output space file (JSON)")->required();
  build_cmd->add_option("--dump-features", dump_features_dir,
                        "also write per-node keypoint/descriptor CSVs here");

  auto* track_cmd = app.add_subcommand("track", "track a trial sequence against a space");
  add_config(track_cmd);
  track_cmd->add_option("--space", space_file, "space file")->required();
  track_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  track_cmd->add_option("--trial", trial_index, "trial index")->default_val(0);
  track_cmd->add_option("--out", out_path, "output results CSV")->required();

  auto* eval_cmd = app.add_subcommand("eval", "error statistics and coverage curves");
  eval_cmd->add_option("--results", results_files, "track results CSV(s)")->required();
  eval_cmd->add_option("--out-dir", out_path, "output directory")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "bundle-adjustment robustness studies");
  add_config(sim_cmd);
  sim_cmd->add_option("--kind", sim_kind, "noise | edge-removal")->required();
  sim_cmd->add_option("--out", out_path, "output CSV")->required();

  auto* bench_cmd = app.add_subcommand("bench", "per-stage latency breakdown");
  add_config(bench_cmd);
  bench_cmd->add_option("--space", space_file, "space file")->required();
  bench_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  bench_cmd->add_option("--out", out_path, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    config::RunConfig cfg;
    if (!config_path.empty()) cfg = config::load(config_path, overrides);

    if (phantom_cmd->parsed()) return cmd_phantom(cfg, out_path);
    if (build_cmd->parsed()) return cmd_build_space(cfg, dataset_dir, out_path, dump_features_dir);
    if (track_cmd->parsed()) return cmd_track(cfg, space_file, dataset_dir, trial_index, out_path);
    if (eval_cmd->parsed()) {
      std::vector<fs::path> files(results_files.begin(), results_files.end());
      return cmd_eval(files, out_path);
    }
    if (sim_cmd->parsed()) return cmd_simulate(cfg, sim_kind, out_path);
    if (bench_cmd->parsed()) return cmd_bench(cfg, space_file, dataset_dir, out_path);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
