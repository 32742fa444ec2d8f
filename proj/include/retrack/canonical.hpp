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
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "retrack/common.hpp"
#include "retrack/features.hpp"
#include "retrack/linalg.hpp"
#include "retrack/matching.hpp"

namespace retrack::canonical {

/// Scan graph: nodes are frames, edges join adjacent grid positions.
struct GridGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // (from, to)
  int central_node = 0;
};

/// Result of registering one edge: the pairwise translation mu (satisfying
/// n_to - n_from = mu), its confidence weight X (sum of retained
/// correspondence scores), and the retained correspondences themselves.
struct EdgeMeasurement {
  int edge_index = -1;
  Translation2D mu;
  double weight = 0.0;
  std::vector<matching::ScoredCorrespondence> correspondences;
};

/// Weighted least-squares problem min || W^(1/2) (C n - mu) ||^2 over node
/// positions n, with C the oriented incidence matrix and W the diagonal of
/// edge weights. Matrices are materialized on demand.
struct BundleProblem {
  GridGraph graph;
  std::vector<EdgeMeasurement> measurements;

  linalg::DenseMatrix incidence() const {
    linalg::DenseMatrix c(static_cast<int>(measurements.size()), graph.node_count);
    for (size_t m = 0; m < measurements.size(); ++m) {
      const auto [from, to] = graph.edges[static_cast<size_t>(measurements[m].edge_index)];
      c(static_cast<int>(m), from) = -1.0;
      c(static_cast<int>(m), to) = 1.0;
    }
    return c;
  }

  linalg::DenseMatrix weights() const {
    const int m = static_cast<int>(measurements.size());
    linalg::DenseMatrix w(m, m);
    for (int i = 0; i < m; ++i) w(i, i) = measurements[static_cast<size_t>(i)].weight;
    return w;
  }
};

/// Keypoints re-expressed in canonical coordinates (origin at the central
/// image's center pixel), descriptors unchanged.
struct CanonicalFeatureSpace {
  struct Entry {
    Vec2 position;
    Descriptor descriptor;
  };
  std::vector<Entry> entries;
  std::vector<Vec2> node_positions;
  int central_node = 0;
  Calibration cal{};
};

inline constexpr int kSpaceFileVersion = 1;

// ============================================================================
// Graph utilities
// ============================================================================

inline bool is_connected(int node_count, std::span<const std::pair<int, int>> edges) {
  if (node_count <= 0) return false;
  std::vector<std::vector<int>> adj(static_cast<size_t>(node_count));
  for (const auto& [u, v] : edges) {
    adj[static_cast<size_t>(u)].push_back(v);
    adj[static_cast<size_t>(v)].push_back(u);
  }
  std::vector<char> seen(static_cast<size_t>(node_count), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const int v : adj[static_cast<size_t>(u)]) {
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  return reached == node_count;
}

inline bool is_connected(const GridGraph& graph, std::span<const EdgeMeasurement> measurements) {
  std::vector<std::pair<int, int>> used;
  used.reserve(measurements.size());
  for (const auto& m : measurements) used.push_back(graph.edges[static_cast<size_t>(m.edge_index)]);
  return is_connected(graph.node_count, used);
}

/// Nodes with no incident measurement contribute nothing to the problem (and
/// no features to the space); the solvable requirement is that every node
/// that does carry measurements is reachable from the central node.
inline bool central_component_covers_measurements(const GridGraph& graph,
                                                  std::span<const EdgeMeasurement> measurements) {
  std::vector<std::vector<int>> adj(static_cast<size_t>(graph.node_count));
  std::vector<char> involved(static_cast<size_t>(graph.node_count), 0);
  for (const auto& m : measurements) {
    const auto [u, v] = graph.edges[static_cast<size_t>(m.edge_index)];
    adj[static_cast<size_t>(u)].push_back(v);
    adj[static_cast<size_t>(v)].push_back(u);
    involved[static_cast<size_t>(u)] = involved[static_cast<size_t>(v)] = 1;
  }
  std::vector<char> seen(static_cast<size_t>(graph.node_count), 0);
  std::queue<int> q;
  q.push(graph.central_node);
  seen[static_cast<size_t>(graph.central_node)] = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const int v : adj[static_cast<size_t>(u)]) {
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        q.push(v);
      }
    }
  }
  for (int i = 0; i < graph.node_count; ++i) {
    if (involved[static_cast<size_t>(i)] && !seen[static_cast<size_t>(i)]) return false;
  }
  return true;
}

// ============================================================================
// Pairwise registration over the grid
// ============================================================================

struct RegistrationResult {
  std::vector<EdgeMeasurement> measurements;
  std::vector<int> failed_edges;
};

/// Registers every adjacency edge: mutual NN matching, consensus scoring,
/// weighted translation estimate. Edges that fail to register are omitted;
/// if the omissions disconnect the graph the space cannot be built.
inline RegistrationResult register_all_edges(const GridGraph& graph,
                                             std::span<const features::FeatureSet> features,
                                             const matching::ConsensusParams& cp = {}) {
  if (static_cast<int>(features.size()) != graph.node_count) {
    throw ShapeError("register_all_edges: feature set count != node count");
  }
  RegistrationResult result;
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [from, to] = graph.edges[e];
    const auto candidates =
        matching::mutual_nn(features[static_cast<size_t>(from)], features[static_cast<size_t>(to)]);
    auto scored = matching::score_matches(candidates, cp);
    const auto estimate = matching::estimate_translation(scored, cp);
    if (!estimate) {
      result.failed_edges.push_back(static_cast<int>(e));
      continue;
    }
    EdgeMeasurement m;
    m.edge_index = static_cast<int>(e);
    // Feature displacement is opposite to frame motion: a keypoint matched
    // from frame `from` to frame `to` moves by n_from - n_to in image
    // coordinates, so the edge measurement n_to - n_from is its negation.
    m.mu = {-estimate->translation.dx, -estimate->translation.dy};
    m.weight = estimate->total_weight;
    std::erase_if(scored, [&](const auto& sc) { return sc.score < cp.inlier_cut; });
    m.correspondences = std::move(scored);
    result.measurements.push_back(std::move(m));
  }
  const bool total_failure = !graph.edges.empty() && result.measurements.empty();
  if (total_failure || !central_component_covers_measurements(graph, result.measurements)) {
    std::string failed;
    for (const int e : result.failed_edges) failed += " " + std::to_string(e);
    throw SpaceConstructionError("register_all_edges: graph disconnected; failed edges:" + failed);
  }
  return result;
}

// ============================================================================
// Bundle adjustment
// ============================================================================

/// Solves the confidence-weighted least squares for node positions with the
/// gauge fixed by anchoring the central node at (0,0). Direct solve of the
/// reduced normal equations C^T W C n = C^T W mu per axis; optimality is
/// verified through the objective gradient before returning.
inline std::vector<Vec2> bundle_adjust(const GridGraph& graph,
                                       std::span<const EdgeMeasurement> measurements) {
  const int n = graph.node_count;
  if (n <= 0) throw ParameterError("bundle_adjust: empty graph");
  if (graph.central_node < 0 || graph.central_node >= n) {
    throw ParameterError("bundle_adjust: central node out of range");
  }
  if (n == 1) return {Vec2{0.0, 0.0}};
  if (measurements.empty()) throw SingularSystemError("bundle_adjust: no measurements");
  if (!central_component_covers_measurements(graph, measurements)) {
    throw SingularSystemError("bundle_adjust: measurement graph is disconnected");
  }

  // Free-node indexing covers measurement-incident nodes, skipping the
  // anchored central node. Nodes without measurements stay at (0,0) and
  // carry no features downstream.
  std::vector<char> involved(static_cast<size_t>(n), 0);
  for (const auto& m : measurements) {
    const auto [u, v] = graph.edges[static_cast<size_t>(m.edge_index)];
    involved[static_cast<size_t>(u)] = involved[static_cast<size_t>(v)] = 1;
  }
  std::vector<int> free_index(static_cast<size_t>(n), -1);
  int n_free = 0;
  for (int i = 0; i < n; ++i) {
    if (i != graph.central_node && involved[static_cast<size_t>(i)]) {
      free_index[static_cast<size_t>(i)] = n_free++;
    }
  }
  if (n_free == 0) return std::vector<Vec2>(static_cast<size_t>(n), Vec2{0.0, 0.0});

  linalg::DenseMatrix a(n_free, n_free);
  std::vector<double> bx(static_cast<size_t>(n_free), 0.0);
  std::vector<double> by(static_cast<size_t>(n_free), 0.0);
  for (const auto& m : measurements) {
    const auto [from, to] = graph.edges[static_cast<size_t>(m.edge_index)];
    const double w = m.weight;
    const int fi = free_index[static_cast<size_t>(from)];
    const int ti = free_index[static_cast<size_t>(to)];
    if (fi >= 0) {
      a(fi, fi) += w;
      bx[static_cast<size_t>(fi)] -= w * m.mu.dx;
      by[static_cast<size_t>(fi)] -= w * m.mu.dy;
    }
    if (ti >= 0) {
      a(ti, ti) += w;
      bx[static_cast<size_t>(ti)] += w * m.mu.dx;
      by[static_cast<size_t>(ti)] += w * m.mu.dy;
    }
    if (fi >= 0 && ti >= 0) {
      a(fi, ti) -= w;
      a(ti, fi) -= w;
    }
  }

  std::vector<double> x_sol, y_sol;
  if (!cholesky_solve(a, bx, x_sol) || !cholesky_solve(a, by, y_sol)) {
    throw SingularSystemError("bundle_adjust: normal equations singular");
  }

  std::vector<Vec2> positions(static_cast<size_t>(n), Vec2{0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    const int fi = free_index[static_cast<size_t>(i)];
    if (fi >= 0) positions[static_cast<size_t>(i)] = {x_sol[static_cast<size_t>(fi)],
                                                      y_sol[static_cast<size_t>(fi)]};
  }

  // Optimality: gradient of ||W^(1/2)(Cn - mu)||^2 over free nodes must
  // vanish (up to solve roundoff, checked relative to the problem scale).
  double grad_inf = 0.0;
  double scale = 1.0;
  std::vector<Vec2> grad(static_cast<size_t>(n), Vec2{0.0, 0.0});
  for (const auto& m : measurements) {
    const auto [from, to] = graph.edges[static_cast<size_t>(m.edge_index)];
    const Vec2 residual = positions[static_cast<size_t>(to)] -
                          positions[static_cast<size_t>(from)] - Vec2{m.mu.dx, m.mu.dy};
    grad[static_cast<size_t>(to)] += residual * (2.0 * m.weight);
    grad[static_cast<size_t>(from)] += residual * (-2.0 * m.weight);
    scale = std::max(scale, m.weight * std::max(std::abs(m.mu.dx), std::abs(m.mu.dy)));
  }
  for (int i = 0; i < n; ++i) {
    if (i == graph.central_node) continue;
    grad_inf = std::max({grad_inf, std::abs(grad[static_cast<size_t>(i)].x),
                         std::abs(grad[static_cast<size_t>(i)].y)});
  }
  if (grad_inf > 1e-9 * scale) {
    throw SingularSystemError("bundle_adjust: solution failed the optimality check");
  }
  return positions;
}

inline std::vector<Vec2> bundle_adjust(const BundleProblem& problem) {
  return bundle_adjust(problem.graph, problem.measurements);
}

// ============================================================================
// Space assembly and persistence
// ============================================================================

/// Places every keypoint that participated in a retained correspondence into
/// canonical coordinates: keypoint offset from its frame center plus the
/// frame's node position. Both endpoints of each correspondence are kept, and
/// near-coincident duplicates are not merged. A single-node graph (no edges)
/// keeps all of its features, serving as the degenerate reference.
inline CanonicalFeatureSpace assemble_space(std::span<const features::FeatureSet> features,
                                            std::span<const EdgeMeasurement> measurements,
                                            const GridGraph& graph,
                                            std::span<const Vec2> node_positions, int frame_width,
                                            int frame_height, const Calibration& cal) {
  if (features.size() != node_positions.size() ||
      static_cast<int>(features.size()) != graph.node_count) {
    throw ShapeError("assemble_space: features/node positions/graph disagree");
  }
  CanonicalFeatureSpace space;
  space.node_positions.assign(node_positions.begin(), node_positions.end());
  space.central_node = graph.central_node;
  space.cal = cal;
  const Vec2 frame_center{(frame_width - 1) / 2.0, (frame_height - 1) / 2.0};

  auto add_entry = [&](int node, int kp_index) {
    const auto& kp = features[static_cast<size_t>(node)].keypoints[static_cast<size_t>(kp_index)];
    const Vec2 pos = Vec2{kp.x, kp.y} - frame_center + node_positions[static_cast<size_t>(node)];
    space.entries.push_back({pos, features[static_cast<size_t>(node)].descriptors[static_cast<size_t>(kp_index)]});
  };

  if (graph.node_count == 1 && graph.edges.empty()) {
    for (size_t k = 0; k < features[0].size(); ++k) add_entry(0, static_cast<int>(k));
    return space;
  }
  for (const auto& m : measurements) {
    const auto [from, to] = graph.edges[static_cast<size_t>(m.edge_index)];
    for (const auto& sc : m.correspondences) {
      add_entry(from, sc.base.src_index);
      add_entry(to, sc.base.tgt_index);
    }
  }
  return space;
}

inline void save_space(const CanonicalFeatureSpace& space, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["version"] = kSpaceFileVersion;
  j["ppd_x"] = space.cal.ppd_x;
  j["ppd_y"] = space.cal.ppd_y;
  j["central_node"] = space.central_node;
  auto& nodes = j["node_positions"] = nlohmann::ordered_json::array();
  for (const auto& p : space.node_positions) nodes.push_back({p.x, p.y});
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : space.entries) {
    nlohmann::ordered_json je;
    je["x"] = e.position.x;
    je["y"] = e.position.y;
    je["desc"] = e.descriptor;
    entries.push_back(std::move(je));
  }
  std::ofstream out(path);
  if (!out) throw IoError("save_space: cannot open " + path.string());
  out << j.dump();
  if (!out) throw IoError("save_space: write failed for " + path.string());
}

inline CanonicalFeatureSpace load_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_space: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError("load_space: " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kSpaceFileVersion) {
      throw MalformedFileError("load_space: unsupported version in " + path.string());
    }
    CanonicalFeatureSpace space;
    space.cal.ppd_x = j.at("ppd_x").get<double>();
    space.cal.ppd_y = j.at("ppd_y").get<double>();
    space.central_node = j.at("central_node").get<int>();
    for (const auto& p : j.at("node_positions")) {
      space.node_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    for (const auto& je : j.at("entries")) {
      CanonicalFeatureSpace::Entry e;
      e.position = {je.at("x").get<double>(), je.at("y").get<double>()};
      const auto& desc = je.at("desc");
      if (desc.size() != kDescriptorDim) {
        throw MalformedFileError("load_space: bad descriptor length in " + path.string());
      }
      for (int k = 0; k < kDescriptorDim; ++k) e.descriptor[static_cast<size_t>(k)] = desc.at(static_cast<size_t>(k)).get<double>();
      space.entries.push_back(std::move(e));
    }
    return space;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError("load_space: " + path.string() + ": " + e.what());
  }
}

}  // namespace retrack::canonical
