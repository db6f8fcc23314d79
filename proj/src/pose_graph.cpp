#include "rgbd_atlas/pose_graph.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <queue>
#include <set>
#include <sstream>

namespace rgbd {

std::vector<std::vector<int>> PoseGraph::components() const {
  std::map<int, std::vector<int>> adj;
  for (const auto& [id, n] : nodes) adj[id];
  for (const auto& e : edges) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::set<int> seen;
  std::vector<std::vector<int>> comps;
  for (const auto& [id, n] : nodes) {
    if (seen.count(id)) continue;
    std::vector<int> comp;
    std::queue<int> q;
    q.push(id);
    seen.insert(id);
    while (!q.empty()) {
      int cur = q.front();
      q.pop();
      comp.push_back(cur);
      for (int nb : adj[cur])
        if (seen.insert(nb).second) q.push(nb);
    }
    comps.push_back(std::move(comp));
  }
  return comps;
}

bool PoseGraph::connected() const { return components().size() <= 1; }

Vec6 edge_residual(const PoseGraph& graph, const GraphEdge& edge) {
  auto itf = graph.nodes.find(edge.from);
  auto itt = graph.nodes.find(edge.to);
  if (itf == graph.nodes.end() || itt == graph.nodes.end())
    throw std::invalid_argument("edge_residual: unknown node id");
  return se3_log(edge.relative.inverse() * itf->second.pose.inverse() * itt->second.pose);
}

void edge_jacobians(const PoseGraph& graph, const GraphEdge& edge, Mat6* j_from, Mat6* j_to) {
  Vec6 r = edge_residual(graph, edge);
  const Pose& pose_from = graph.nodes.at(edge.from).pose;
  // A left increment Exp(d) on pose_to enters the residual argument as
  // Exp(Ad(Z^-1 X^-1) d), so d r = Jl^-1(r) Ad(Z^-1 X^-1) d; the increment on
  // pose_from enters with the opposite sign.
  Mat6 jl_inv = se3_left_jacobian(r).inverse();
  Mat6 lever = se3_adjoint(edge.relative.inverse() * pose_from.inverse());
  if (j_to) *j_to = jl_inv * lever;
  if (j_from) *j_from = -jl_inv * lever;
}

namespace {

double graph_cost(const PoseGraph& g) {
  double cost = 0;
  for (const auto& e : g.edges) {
    Vec6 r = edge_residual(g, e);
    cost += r.dot(e.information * r);
  }
  return cost;
}

}  // namespace

GraphSolveReport optimize(PoseGraph& graph, int max_iterations) {
  if (graph.nodes.empty()) throw std::invalid_argument("optimize: empty graph");
  if (!graph.nodes.count(graph.anchor)) throw std::invalid_argument("optimize: anchor not in graph");
  if (!graph.connected()) throw std::runtime_error("optimize: graph is disconnected");

  // Variable index per non-anchor node.
  std::map<int, int> var;
  for (const auto& [id, n] : graph.nodes)
    if (id != graph.anchor) var[id] = int(var.size());
  const int nv = int(var.size());

  GraphSolveReport report;
  report.initial_cost = graph_cost(graph);
  double cost = report.initial_cost;

  if (nv == 0) {
    report.final_cost = cost;
    report.converged = true;
    return report;
  }

  for (int iter = 0; iter < max_iterations; ++iter) {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(6 * nv);

    for (const auto& e : graph.edges) {
      Vec6 r = edge_residual(graph, e);
      Mat6 jf, jt;
      edge_jacobians(graph, e, &jf, &jt);
      const int vf = (e.from == graph.anchor) ? -1 : var.at(e.from);
      const int vt = (e.to == graph.anchor) ? -1 : var.at(e.to);
      auto add_block = [&](int vr, int vc, const Mat6& m) {
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) trips.emplace_back(6 * vr + i, 6 * vc + j, m(i, j));
      };
      Mat6 jf_w = e.information * jf, jt_w = e.information * jt;
      if (vf >= 0) {
        add_block(vf, vf, jf.transpose() * jf_w);
        b.segment<6>(6 * vf) -= jf.transpose() * (e.information * r);
      }
      if (vt >= 0) {
        add_block(vt, vt, jt.transpose() * jt_w);
        b.segment<6>(6 * vt) -= jt.transpose() * (e.information * r);
      }
      if (vf >= 0 && vt >= 0) {
        add_block(vf, vt, jf.transpose() * jt_w);
        add_block(vt, vf, jt.transpose() * jf_w);
      }
    }

    Eigen::SparseMatrix<double> h(6 * nv, 6 * nv);
    h.setFromTriplets(trips.begin(), trips.end());

    // Levenberg fallback: scale the diagonal up by 10x whenever the step
    // fails to decrease the cost.
    double lambda = 0;
    bool stepped = false;
    bool solver_ok = false;
    auto saved = graph.nodes;
    for (int attempt = 0; attempt < 10; ++attempt) {
      Eigen::SparseMatrix<double> h_damped = h;
      if (lambda > 0) {
        for (int i = 0; i < 6 * nv; ++i) h_damped.coeffRef(i, i) *= (1.0 + lambda);
      } else {
        for (int i = 0; i < 6 * nv; ++i) h_damped.coeffRef(i, i) += 1e-12;
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h_damped);
      if (solver.info() != Eigen::Success) {
        lambda = lambda == 0 ? 1.0 : lambda * 10.0;
        continue;
      }
      Eigen::VectorXd dx = solver.solve(b);
      if (solver.info() != Eigen::Success) {
        lambda = lambda == 0 ? 1.0 : lambda * 10.0;
        continue;
      }
      solver_ok = true;
      graph.nodes = saved;
      for (const auto& [id, vi] : var) {
        Vec6 delta = dx.segment<6>(6 * vi);
        graph.nodes[id].pose = se3_exp(delta) * graph.nodes[id].pose;
      }
      double new_cost = graph_cost(graph);
      if (new_cost <= cost) {
        cost = new_cost;
        stepped = true;
        break;
      }
      graph.nodes = saved;
      lambda = lambda == 0 ? 1.0 : lambda * 10.0;
    }
    ++report.iterations;
    if (!stepped) {
      if (!solver_ok) throw std::runtime_error("optimize: damping retries exhausted");
      // Solvable but no strict decrease: already at a numerical minimum.
      report.converged = true;
      report.final_cost = cost;
      break;
    }

    double prev = (iter == 0) ? report.initial_cost : report.final_cost;
    report.final_cost = cost;
    double denom = std::max(prev, 1e-30);
    if ((prev - cost) / denom < 1e-9) {
      report.converged = true;
      break;
    }
  }
  report.final_cost = cost;
  return report;
}

int merged_node_id(int session_index, int node_id) { return session_index * 1000000 + node_id; }

PoseGraph merge_sessions(const std::vector<PoseGraph>& graphs,
                         const std::vector<CrossEdge>& cross_edges) {
  if (graphs.empty()) throw std::invalid_argument("merge_sessions: no sessions");
  PoseGraph merged;
  merged.anchor = merged_node_id(0, graphs[0].anchor);

  std::set<int> attached;  // session indices connected to the merged set
  attached.insert(0);
  for (size_t s = 0; s < graphs.size(); ++s) {
    for (const auto& [id, n] : graphs[s].nodes)
      merged.nodes[merged_node_id(int(s), id)] = {n.pose, int(s)};
    for (const auto& e : graphs[s].edges) {
      GraphEdge me = e;
      me.from = merged_node_id(int(s), e.from);
      me.to = merged_node_id(int(s), e.to);
      merged.edges.push_back(me);
    }
  }
  for (const auto& ce : cross_edges) {
    GraphEdge e;
    e.from = merged_node_id(ce.from_session, ce.from_node);
    e.to = merged_node_id(ce.to_session, ce.to_node);
    if (!merged.nodes.count(e.from) || !merged.nodes.count(e.to))
      throw std::invalid_argument("merge_sessions: cross edge references unknown node");
    e.relative = ce.relative;
    e.information = ce.information;
    e.kind = EdgeKind::loop;
    merged.edges.push_back(e);
  }

  // Each session, in input order, must connect to the set merged so far.
  for (size_t s = 1; s < graphs.size(); ++s) {
    bool linked = false;
    for (const auto& ce : cross_edges) {
      int a = ce.from_session, b = ce.to_session;
      if ((a == int(s) && attached.count(b)) || (b == int(s) && attached.count(a))) {
        linked = true;
        break;
      }
    }
    if (!linked)
      throw std::runtime_error("merge_sessions: session " + std::to_string(s) +
                               " has no cross edge to the merged set");
    attached.insert(int(s));
  }

  optimize(merged);
  return merged;
}

std::string serialize_graph(const PoseGraph& graph) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [id, n] : graph.nodes) {
    const Quat& q = n.pose.rotation();
    const Vec3& t = n.pose.translation();
    os << "VERTEX " << id << ' ' << n.session_id << ' ' << t.x() << ' ' << t.y() << ' ' << t.z()
       << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  for (const auto& e : graph.edges) {
    const Quat& q = e.relative.rotation();
    const Vec3& t = e.relative.translation();
    os << "EDGE " << e.from << ' ' << e.to << ' '
       << (e.kind == EdgeKind::odometry ? "odometry" : "loop") << ' ' << t.x() << ' ' << t.y()
       << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
    for (int i = 0; i < 6; ++i)
      for (int j = i; j < 6; ++j) os << ' ' << e.information(i, j);
    os << '\n';
  }
  return os.str();
}

PoseGraph parse_graph(const std::string& text) {
  PoseGraph g;
  std::istringstream is(text);
  std::string line;
  bool first_vertex = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "VERTEX") {
      int id, session;
      double tx, ty, tz, qx, qy, qz, qw;
      ls >> id >> session >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
      if (!ls) throw std::runtime_error("parse_graph: malformed VERTEX line");
      g.nodes[id] = {Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz)), session};
      if (first_vertex) {
        g.anchor = id;
        first_vertex = false;
      }
    } else if (tag == "EDGE") {
      GraphEdge e;
      std::string kind;
      double tx, ty, tz, qx, qy, qz, qw;
      ls >> e.from >> e.to >> kind >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
      e.kind = kind == "loop" ? EdgeKind::loop : EdgeKind::odometry;
      e.relative = Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
      for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) {
          double v;
          ls >> v;
          e.information(i, j) = v;
          e.information(j, i) = v;
        }
      if (!ls) throw std::runtime_error("parse_graph: malformed EDGE line");
      g.edges.push_back(e);
    } else {
      throw std::runtime_error("parse_graph: unknown record '" + tag + "'");
    }
  }
  return g;
}

}  // namespace rgbd
