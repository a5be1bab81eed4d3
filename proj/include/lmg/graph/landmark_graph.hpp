#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lmg/action.hpp"
#include "lmg/error.hpp"
#include "lmg/model/network.hpp"

namespace lmg {

enum class NodeKind { Decision, Landmark };

struct GraphNode {
  NodeKind kind = NodeKind::Decision;
  /// Landmark surface tokens; empty for decision points.
  std::vector<std::string> tokens;

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct ActionEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  Action label = Action::Forward;

  friend bool operator==(const ActionEdge&, const ActionEdge&) = default;
};

/// Unlabeled landmark-to-decision-point nearness link.
struct NearnessEdge {
  std::size_t landmark = 0;
  std::size_t decision = 0;

  friend bool operator==(const NearnessEdge&, const NearnessEdge&) = default;
  friend auto operator<=>(const NearnessEdge&, const NearnessEdge&) = default;
};

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

/// Decision points joined by action edges into a single directed path, with
/// landmark nodes (unique by exact token sequence) attached by nearness edges.
class LandmarkGraph {
public:
  bool empty() const { return nodes_.empty(); }

  std::size_t add_root() {
    if (!nodes_.empty()) throw ValidationError("graph already has a root");
    return push_decision();
  }

  /// Appends a decision point reached from the current last one by `a`.
  std::size_t add_step(Action a) {
    if (nodes_.empty()) throw ValidationError("add_step on a graph without a root");
    const std::size_t prev = decisions_.back();
    const std::size_t id = push_decision();
    action_edges_.push_back(ActionEdge{prev, id, a});
    return id;
  }

  /// Landmark node for `tokens`, created only if no node has that exact
  /// token sequence.
  std::size_t add_landmark(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ValidationError("landmark span must not be empty");
    if (auto it = landmark_index_.find(tokens); it != landmark_index_.end()) return it->second;
    const std::size_t id = nodes_.size();
    nodes_.push_back(GraphNode{NodeKind::Landmark, tokens});
    landmarks_.push_back(id);
    landmark_index_.emplace(tokens, id);
    return id;
  }

  void add_nearness(std::size_t landmark, std::size_t decision) {
    if (landmark >= nodes_.size() || nodes_[landmark].kind != NodeKind::Landmark ||
        decision >= nodes_.size() || nodes_[decision].kind != NodeKind::Decision) {
      throw ValidationError("nearness edge must join a landmark to a decision point");
    }
    const NearnessEdge e{landmark, decision};
    if (nearness_set_.insert(e).second) nearness_edges_.push_back(e);
  }

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<std::size_t>& decision_nodes() const { return decisions_; }
  const std::vector<std::size_t>& landmark_nodes() const { return landmarks_; }
  const std::vector<ActionEdge>& action_edges() const { return action_edges_; }
  const std::vector<NearnessEdge>& nearness_edges() const { return nearness_edges_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return action_edges_.size() + nearness_edges_.size(); }
  /// |g|: nodes plus edges.
  std::size_t size() const { return node_count() + edge_count(); }

  friend bool operator==(const LandmarkGraph& a, const LandmarkGraph& b) {
    return a.nodes_ == b.nodes_ && a.action_edges_ == b.action_edges_ && a.nearness_edges_ == b.nearness_edges_;
  }

private:
  std::size_t push_decision() {
    const std::size_t id = nodes_.size();
    nodes_.push_back(GraphNode{NodeKind::Decision, {}});
    decisions_.push_back(id);
    return id;
  }

  std::vector<GraphNode> nodes_;
  std::vector<std::size_t> decisions_;
  std::vector<std::size_t> landmarks_;
  std::vector<ActionEdge> action_edges_;
  std::vector<NearnessEdge> nearness_edges_;
  std::set<NearnessEdge> nearness_set_;
  std::map<std::vector<std::string>, std::size_t> landmark_index_;
};

/// Graph construction from parallel action and state sequences: a root, one
/// decision point per non-STOP action, and the landmark spans of each step
/// attached to that step's decision point. STOP ends the walk.
inline LandmarkGraph build_graph(const ActionSeq& actions, const StateSeq& states,
                                 const std::vector<std::string>& tokens) {
  if (actions.size() != states.size()) {
    throw ValidationError("build_graph: " + std::to_string(actions.size()) + " actions but " +
                          std::to_string(states.size()) + " states");
  }
  LandmarkGraph g;
  g.add_root();
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (actions[t] == Action::Stop) break;
    const std::size_t node = g.add_step(actions[t]);
    if (states[t].size() != tokens.size()) {
      throw ValidationError("build_graph: state " + std::to_string(t) + " has length " +
                            std::to_string(states[t].size()) + " for " + std::to_string(tokens.size()) + " tokens");
    }
    for (const auto& [b, e] : group_spans(states[t])) {
      const std::vector<std::string> span(tokens.begin() + static_cast<std::ptrdiff_t>(b),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(e));
      g.add_nearness(g.add_landmark(span), node);
    }
  }
  return g;
}

/// Joins sentence graphs into one route graph: each later root merges into
/// the previous final decision point, a leading stand becomes move, and
/// landmarks are shared by exact token sequence.
inline LandmarkGraph stitch_route(const std::vector<LandmarkGraph>& graphs) {
  if (graphs.empty()) throw ValidationError("stitch_route needs at least one graph");
  LandmarkGraph out;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto& g = graphs[k];
    if (g.empty()) continue;
    std::map<std::size_t, std::size_t> remap;
    const auto& dec = g.decision_nodes();
    if (out.empty()) {
      remap[dec.front()] = out.add_root();
    } else {
      remap[dec.front()] = out.decision_nodes().back();
    }
    const auto& edges = g.action_edges();
    for (std::size_t i = 0; i < edges.size(); ++i) {
      Action a = edges[i].label;
      if (k > 0 && i == 0 && a == Action::Stand) a = Action::Move;
      remap[edges[i].to] = out.add_step(a);
    }
    for (const auto& e : g.nearness_edges()) {
      const std::size_t l = out.add_landmark(g.nodes()[e.landmark].tokens);
      out.add_nearness(l, remap.at(e.decision));
    }
  }
  return out;
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

/// Graphviz text. Decision points are circles n0..nT, landmarks boxes l0..,
/// action edges directed and labeled, nearness edges dashed without arrows.
inline std::string to_dot(const LandmarkGraph& g, const std::string& name = "landmark_graph") {
  std::map<std::size_t, std::string> ids;
  for (std::size_t i = 0; i < g.decision_nodes().size(); ++i) ids[g.decision_nodes()[i]] = "n" + std::to_string(i);
  for (std::size_t i = 0; i < g.landmark_nodes().size(); ++i) ids[g.landmark_nodes()[i]] = "l" + std::to_string(i);

  std::ostringstream os;
  os << "digraph \"" << detail::dot_escape(name) << "\" {\n";
  os << "  rankdir=LR;\n";
  for (std::size_t i = 0; i < g.decision_nodes().size(); ++i) {
    os << "  n" << i << " [shape=circle, label=\"n" << i << "\"];\n";
  }
  for (std::size_t i = 0; i < g.landmark_nodes().size(); ++i) {
    os << "  l" << i << " [shape=box, label=\"" << detail::dot_escape(join_tokens(g.nodes()[g.landmark_nodes()[i]].tokens))
       << "\"];\n";
  }
  for (const auto& e : g.action_edges()) {
    os << "  " << ids.at(e.from) << " -> " << ids.at(e.to) << " [label=\"" << action_code(e.label) << "\"];\n";
  }
  for (const auto& e : g.nearness_edges()) {
    os << "  " << ids.at(e.landmark) << " -> " << ids.at(e.decision) << " [dir=none, style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

inline nlohmann::ordered_json graph_to_json(const LandmarkGraph& g) {
  nlohmann::ordered_json j;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes()) {
    if (n.kind == NodeKind::Decision) {
      nodes.push_back({{"kind", "decision"}});
    } else {
      nodes.push_back({{"kind", "landmark"}, {"text", join_tokens(n.tokens)}});
    }
  }
  auto actions = nlohmann::ordered_json::array();
  for (const auto& e : g.action_edges()) actions.push_back({e.from, e.to, std::string(action_code(e.label))});
  auto near = nlohmann::ordered_json::array();
  for (const auto& e : g.nearness_edges()) near.push_back({e.landmark, e.decision});
  j["nodes"] = std::move(nodes);
  j["action_edges"] = std::move(actions);
  j["nearness_edges"] = std::move(near);
  return j;
}

}  // namespace lmg
