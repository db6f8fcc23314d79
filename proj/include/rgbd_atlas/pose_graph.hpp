#pragma once

// Factor-graph optimization over SE(3) with damped Gauss-Newton and
// multi-session merging.

#include "rgbd_atlas/core.hpp"

#include <map>
#include <string>

namespace rgbd {

enum class EdgeKind { odometry, loop };

struct GraphNode {
  Pose pose;
  int session_id = 0;
};

struct GraphEdge {
  int from = 0, to = 0;
  Pose relative;  // predicted pose_from^-1 * pose_to
  Mat6 information = Mat6::Identity();
  EdgeKind kind = EdgeKind::odometry;
};

struct PoseGraph {
  std::map<int, GraphNode> nodes;
  std::vector<GraphEdge> edges;
  int anchor = 0;

  bool connected() const;
  /// Connected components as node-id sets (ignoring edge direction).
  std::vector<std::vector<int>> components() const;
};

struct GraphSolveReport {
  double initial_cost = 0;
  double final_cost = 0;
  int iterations = 0;
  bool converged = false;
};

/// r = log(relative^-1 * pose_from^-1 * pose_to); cost term r^T * info * r.
Vec6 edge_residual(const PoseGraph& graph, const GraphEdge& edge);

/// Analytic Jacobians of edge_residual with respect to left-multiplied se(3)
/// increments on the two endpoint poses.
void edge_jacobians(const PoseGraph& graph, const GraphEdge& edge, Mat6* j_from, Mat6* j_to);

/// Damped Gauss-Newton with sparse Cholesky; the anchor node is pinned.
/// Throws on a disconnected graph or an unsolvable system.
GraphSolveReport optimize(PoseGraph& graph, int max_iterations = 50);

/// Re-namespaces node ids per session and optimizes the union graph. Sessions
/// attach in input order; each must connect to the already merged set through
/// cross_edges (which address nodes as (session_index, node_id)).
struct CrossEdge {
  int from_session = 0, from_node = 0;
  int to_session = 0, to_node = 0;
  Pose relative;
  Mat6 information = Mat6::Identity();
};

/// Node id of (session_index, node_id) in the merged graph.
int merged_node_id(int session_index, int node_id);

PoseGraph merge_sessions(const std::vector<PoseGraph>& graphs,
                         const std::vector<CrossEdge>& cross_edges);

/// Line-oriented text serialization (VERTEX / EDGE records).
std::string serialize_graph(const PoseGraph& graph);
PoseGraph parse_graph(const std::string& text);

}  // namespace rgbd
