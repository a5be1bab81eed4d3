#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "lmg/error.hpp"
#include "lmg/graph/landmark_graph.hpp"

namespace lmg {

/// Edit costs. Insertions and deletions cost 1; decision points substitute
/// for each other freely; landmark substitution is 0/1 on exact token
/// sequence (strict) or 1 - Jaccard of token sets (relaxed); any
/// landmark/decision substitution costs 1; edges substitute freely iff
/// their labels agree.
struct EditCostModel {
  bool relaxed = false;

  static EditCostModel strict_model() { return EditCostModel{false}; }
  static EditCostModel relaxed_model() { return EditCostModel{true}; }
};

inline constexpr std::size_t kDefaultGedNodeLimit = 30;

/// |A ∩ B| / |A ∪ B| over distinct token strings; 1 when both are empty.
inline double token_set_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

inline double node_substitution_cost(const GraphNode& a, const GraphNode& b, const EditCostModel& costs) {
  if (a.kind != b.kind) return 1.0;
  if (a.kind == NodeKind::Decision) return 0.0;
  if (a.tokens == b.tokens) return 0.0;
  return costs.relaxed ? 1.0 - token_set_jaccard(a.tokens, b.tokens) : 1.0;
}

namespace detail {

inline constexpr int kNoEdge = -1;
inline constexpr int kNearnessLabel = static_cast<int>(kNumActions);

/// Dense directed adjacency with edge labels: action index, or the
/// nearness label for landmark -> decision links.
struct LabeledAdjacency {
  std::size_t n = 0;
  std::vector<int> label;

  explicit LabeledAdjacency(const LandmarkGraph& g) : n(g.node_count()), label(n * n, kNoEdge) {
    for (const auto& e : g.action_edges()) label[e.from * n + e.to] = static_cast<int>(index_of(e.label));
    for (const auto& e : g.nearness_edges()) label[e.landmark * n + e.decision] = kNearnessLabel;
  }
  int at(std::size_t u, std::size_t v) const { return label[u * n + v]; }
};

inline double edge_pair_cost(int a, int b) {
  if (a == kNoEdge && b == kNoEdge) return 0.0;
  if (a == kNoEdge || b == kNoEdge) return 1.0;
  return a == b ? 0.0 : 1.0;
}

/// Minimum-cost assignment on a square matrix (Hungarian method, O(n^3)).
/// Returns the optimal column for each row.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, std::size_t n, double* total = nullptr) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  double sum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j]) {
      row_to_col[p[j] - 1] = static_cast<int>(j - 1);
      sum += cost[(p[j] - 1) * n + (j - 1)];
    }
  }
  if (total) *total = sum;
  return row_to_col;
}

/// Depth-first branch and bound over assignments of g1 nodes (in index
/// order) to g2 nodes or deletion. The bound solves an assignment problem
/// over the unassigned nodes whose entries hold the node cost, the exact
/// cost of edges to already-assigned nodes, and half a label-multiset bound
/// on edges among unassigned nodes.
class GedSearch {
public:
  GedSearch(const LandmarkGraph& g1, const LandmarkGraph& g2, const EditCostModel& costs)
      : g1_(g1), g2_(g2), adj1_(g1), adj2_(g2), n1_(g1.node_count()), n2_(g2.node_count()) {
    sub_.resize(n1_ * n2_);
    for (std::size_t u = 0; u < n1_; ++u) {
      for (std::size_t v = 0; v < n2_; ++v) sub_[u * n2_ + v] = node_substitution_cost(g1.nodes()[u], g2.nodes()[v], costs);
    }
  }

  double run() {
    if (n1_ == 0) return static_cast<double>(g2_.size());
    if (n2_ == 0) return static_cast<double>(g1_.size());
    map_.clear();
    used_.assign(n2_, 0);
    const Bound root = bound();
    best_ = tail_cost(root.completion);
    search(0.0, root.value);
    return best_;
  }

private:
  static constexpr double kSlack = 1e-9;

  struct Bound {
    double value = 0.0;
    std::vector<int> completion;  // for each unassigned g1 node, its g2 image or -1
  };

  void search(double g, double h) {
    const std::size_t k = map_.size();
    if (g + h >= best_ - kSlack) return;
    if (k == n1_) {
      best_ = std::min(best_, g + insertion_cost());
      return;
    }
    struct Child {
      int v;
      double g;
      double h;
    };
    std::vector<Child> children;
    for (std::size_t v = 0; v <= n2_; ++v) {
      const bool del = v == n2_;
      if (!del && used_[v]) continue;
      const int target = del ? -1 : static_cast<int>(v);
      const double cg = g + step_cost(k, target);
      assign(target);
      const Bound b = bound();
      if (cg + b.value < best_ - kSlack) {
        best_ = std::min(best_, cg + tail_cost(b.completion));
        children.push_back(Child{target, cg, b.value});
      }
      unassign(target);
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const Child& a, const Child& b) { return a.g + a.h < b.g + b.h; });
    for (const auto& c : children) {
      assign(c.v);
      search(c.g, c.h);
      unassign(c.v);
    }
  }

  void assign(int v) {
    map_.push_back(v);
    if (v >= 0) used_[static_cast<std::size_t>(v)] = 1;
  }
  void unassign(int v) {
    map_.pop_back();
    if (v >= 0) used_[static_cast<std::size_t>(v)] = 0;
  }

  /// Cost of assigning g1 node k to `v` (-1 = delete), including every edge
  /// between k and the already-assigned g1 nodes.
  double step_cost(std::size_t k, int v) const {
    double c = v < 0 ? 1.0 : sub_[k * n2_ + static_cast<std::size_t>(v)];
    for (std::size_t u = 0; u < map_.size(); ++u) {
      const int w = map_[u];
      const bool both = v >= 0 && w >= 0;
      const auto vv = static_cast<std::size_t>(v), ww = static_cast<std::size_t>(w);
      c += edge_pair_cost(adj1_.at(k, u), both ? adj2_.at(vv, ww) : kNoEdge);
      c += edge_pair_cost(adj1_.at(u, k), both ? adj2_.at(ww, vv) : kNoEdge);
    }
    return c;
  }

  /// Insertions of unused g2 nodes and every g2 edge touching one.
  double insertion_cost() const {
    double c = 0.0;
    for (std::size_t v = 0; v < n2_; ++v) c += used_[v] ? 0.0 : 1.0;
    for (std::size_t a = 0; a < n2_; ++a) {
      for (std::size_t b = 0; b < n2_; ++b) {
        if (adj2_.at(a, b) != kNoEdge && (!used_[a] || !used_[b])) c += 1.0;
      }
    }
    return c;
  }

  /// Exact cost of finishing the current partial assignment with
  /// `completion` for the remaining g1 nodes.
  double tail_cost(const std::vector<int>& completion) {
    double c = 0.0;
    for (int v : completion) {
      c += step_cost(map_.size(), v);
      assign(v);
    }
    c += insertion_cost();
    for (std::size_t i = completion.size(); i-- > 0;) unassign(completion[i]);
    return c;
  }

  /// Directed label counts of edges between `node` and nodes accepted by
  /// `internal`: outgoing labels in slots 0..9, incoming in 10..19.
  template <class Adj, class Pred>
  static std::array<int, 2 * (kNumActions + 1)> incident_labels(const Adj& adj, std::size_t n, std::size_t node,
                                                                Pred internal) {
    std::array<int, 2 * (kNumActions + 1)> c{};
    for (std::size_t w = 0; w < n; ++w) {
      if (w == node || !internal(w)) continue;
      if (int l = adj.at(node, w); l != kNoEdge) ++c[static_cast<std::size_t>(l)];
      if (int l = adj.at(w, node); l != kNoEdge) ++c[kNumActions + 1 + static_cast<std::size_t>(l)];
    }
    return c;
  }

  static double label_distance(const std::array<int, 2 * (kNumActions + 1)>& a,
                               const std::array<int, 2 * (kNumActions + 1)>& b) {
    int out_a = 0, out_b = 0, in_a = 0, in_b = 0, out_common = 0, in_common = 0;
    for (std::size_t l = 0; l <= kNumActions; ++l) {
      out_a += a[l];
      out_b += b[l];
      out_common += std::min(a[l], b[l]);
      const std::size_t m = kNumActions + 1 + l;
      in_a += a[m];
      in_b += b[m];
      in_common += std::min(a[m], b[m]);
    }
    return static_cast<double>(std::max(out_a, out_b) - out_common + std::max(in_a, in_b) - in_common);
  }

  /// Lower bound on the remaining cost of the current partial assignment,
  /// plus the completion that attains the assignment-problem optimum.
  Bound bound() {
    const std::size_t k = map_.size();
    std::vector<std::size_t> rest2;
    for (std::size_t v = 0; v < n2_; ++v) {
      if (!used_[v]) rest2.push_back(v);
    }
    const std::size_t r1 = n1_ - k, r2 = rest2.size();
    const std::size_t n = r1 + r2;
    Bound b;
    if (n == 0) return b;
    const double forbid = 1e9;

    std::vector<std::array<int, 2 * (kNumActions + 1)>> lab1(r1), lab2(r2);
    std::vector<double> cross_del(r1), cross_ins(r2);
    for (std::size_t i = 0; i < r1; ++i) {
      const std::size_t u = k + i;
      lab1[i] = incident_labels(adj1_, n1_, u, [&](std::size_t w) { return w >= k; });
      double cross = 0.0;
      for (std::size_t w = 0; w < k; ++w) cross += (adj1_.at(u, w) != kNoEdge) + (adj1_.at(w, u) != kNoEdge);
      cross_del[i] = cross;
    }
    for (std::size_t j = 0; j < r2; ++j) {
      const std::size_t v = rest2[j];
      lab2[j] = incident_labels(adj2_, n2_, v, [&](std::size_t w) { return !used_[w]; });
      double cross = 0.0;
      for (std::size_t w = 0; w < n2_; ++w) {
        if (used_[w]) cross += (adj2_.at(v, w) != kNoEdge) + (adj2_.at(w, v) != kNoEdge);
      }
      cross_ins[j] = cross;
    }
    auto half_count = [](const std::array<int, 2 * (kNumActions + 1)>& c) {
      int s = 0;
      for (int x : c) s += x;
      return 0.5 * s;
    };

    std::vector<double> cost(n * n, forbid);
    for (std::size_t i = 0; i < r1; ++i) {
      const std::size_t u = k + i;
      for (std::size_t j = 0; j < r2; ++j) {
        cost[i * n + j] = step_cost(u, static_cast<int>(rest2[j])) + 0.5 * label_distance(lab1[i], lab2[j]);
      }
      cost[i * n + r2 + i] = 1.0 + cross_del[i] + half_count(lab1[i]);
    }
    for (std::size_t j = 0; j < r2; ++j) {
      cost[(r1 + j) * n + j] = 1.0 + cross_ins[j] + half_count(lab2[j]);
      for (std::size_t i = 0; i < r1; ++i) cost[(r1 + j) * n + r2 + i] = 0.0;
    }
    const auto rows = solve_assignment(cost, n, &b.value);
    b.completion.resize(r1);
    for (std::size_t i = 0; i < r1; ++i) {
      const int col = rows[i];
      b.completion[i] = (col >= 0 && static_cast<std::size_t>(col) < r2) ? static_cast<int>(rest2[static_cast<std::size_t>(col)]) : -1;
    }
    return b;
  }

  const LandmarkGraph& g1_;
  const LandmarkGraph& g2_;
  LabeledAdjacency adj1_, adj2_;
  std::size_t n1_, n2_;
  std::vector<double> sub_;
  std::vector<int> map_;
  std::vector<char> used_;
  double best_ = 0.0;
};

}  // namespace detail

/// Exact graph edit distance by best-first search over node assignments.
inline double ged(const LandmarkGraph& a, const LandmarkGraph& b, const EditCostModel& costs,
                  std::size_t node_limit = kDefaultGedNodeLimit) {
  const std::size_t total = a.node_count() + b.node_count();
  if (total > node_limit) {
    throw LimitError("graph edit distance: " + std::to_string(total) + " combined nodes exceed the exact-search limit of " +
                     std::to_string(node_limit) + " (raise it with --ged-node-limit)");
  }
  if (b.node_count() > 64) throw LimitError("graph edit distance supports at most 64 nodes per graph");
  return detail::GedSearch(a, b, costs).run();
}

/// 1 - ged / (|g_p| + |g_g|); strict or relaxed landmark costs.
inline double graph_similarity(const LandmarkGraph& pred, const LandmarkGraph& gold, bool relaxed,
                               std::size_t node_limit = kDefaultGedNodeLimit) {
  const double denom = static_cast<double>(pred.size() + gold.size());
  if (denom == 0.0) return 1.0;
  const double d = ged(pred, gold, relaxed ? EditCostModel::relaxed_model() : EditCostModel::strict_model(), node_limit);
  return 1.0 - d / denom;
}

}  // namespace lmg
