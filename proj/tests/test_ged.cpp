#include <gtest/gtest.h>

#include "lmg/metrics/ged.hpp"
#include "support/oracles.hpp"

using namespace lmg;

using A = Action;

namespace {

LandmarkGraph path_graph(const ActionSeq& actions) {
  LandmarkGraph g;
  g.add_root();
  for (A a : actions) g.add_step(a);
  return g;
}

}  // namespace

TEST(Ged, MatchesExhaustiveMappingOracle) {
  Rng rng(31);
  for (int rep = 0; rep < 150; ++rep) {
    const auto a = oracle::random_graph(rng, 4);
    const auto b = oracle::random_graph(rng, 4);
    for (bool relaxed : {false, true}) {
      const auto costs = relaxed ? EditCostModel::relaxed_model() : EditCostModel::strict_model();
      EXPECT_NEAR(ged(a, b, costs), oracle::brute_force_ged(a, b, relaxed), 1e-9)
          << "rep " << rep << (relaxed ? " relaxed" : " strict") << "\n"
          << to_dot(a) << to_dot(b);
    }
  }
}

TEST(Ged, LargerGraphsMatchOracle) {
  Rng rng(32);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = oracle::random_graph(rng, 6);
    const auto b = oracle::random_graph(rng, 6);
    EXPECT_NEAR(ged(a, b, EditCostModel::relaxed_model()), oracle::brute_force_ged(a, b, true), 1e-9) << rep;
  }
}

TEST(Ged, IdentityAndEmpty) {
  const auto g = build_graph({A::Forward, A::Left, A::Stop}, {{0, 1, 1}, {0, 0, 0}, {0, 0, 0}}, {"by", "the", "lamp"});
  EXPECT_EQ(ged(g, g, EditCostModel::strict_model()), 0.0);
  const LandmarkGraph empty;
  EXPECT_EQ(ged(g, empty, EditCostModel::strict_model()), static_cast<double>(g.size()));
  EXPECT_EQ(ged(empty, g, EditCostModel::strict_model()), static_cast<double>(g.size()));
}

TEST(Similarity, OneActionLabelDiffers) {
  const auto p = path_graph({A::Forward});
  const auto g = path_graph({A::Left});
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(graph_similarity(p, g, false), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(oracle::brute_force_ged(p, g, false), 1.0, 1e-12);
}

TEST(Similarity, Conventions) {
  const auto g = path_graph({A::Forward, A::Right});
  EXPECT_EQ(graph_similarity(g, g, false), 1.0);
  EXPECT_EQ(graph_similarity(LandmarkGraph{}, g, false), 0.0);
  EXPECT_EQ(graph_similarity(LandmarkGraph{}, LandmarkGraph{}, true), 1.0);
}

TEST(Similarity, RelaxedUsesTokenOverlap) {
  const std::vector<std::string> toks{"the", "coat", "rack", ","};
  const auto p = build_graph({A::Forward, A::Stop}, {{1, 1, 1, 0}, {0, 0, 0, 0}}, toks);
  const auto g = build_graph({A::Forward, A::Stop}, {{1, 1, 1, 1}, {0, 0, 0, 0}}, toks);
  // |g| = 5 each; one landmark substitution costing 1 strictly, 1 - 3/4 relaxed.
  EXPECT_NEAR(graph_similarity(p, g, false), 1.0 - 1.0 / 10.0, 1e-12);
  EXPECT_NEAR(graph_similarity(p, g, true), 1.0 - 0.25 / 10.0, 1e-12);
}

TEST(Similarity, PropertiesOnRandomGraphs) {
  Rng rng(33);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = oracle::random_graph(rng, 5);
    const auto b = oracle::random_graph(rng, 5);
    const double s = graph_similarity(a, b, false), sl = graph_similarity(a, b, true);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(sl, 1.0);
    EXPECT_GE(sl, s - 1e-12);
    EXPECT_NEAR(ged(a, b, EditCostModel::strict_model()), ged(b, a, EditCostModel::strict_model()), 1e-9);
    EXPECT_NEAR(ged(a, b, EditCostModel::relaxed_model()), ged(b, a, EditCostModel::relaxed_model()), 1e-9);
    if (a.landmark_nodes().empty() && b.landmark_nodes().empty()) {
      EXPECT_DOUBLE_EQ(s, sl);
    }
  }
}

TEST(Ged, NodeLimitError) {
  const auto a = path_graph(ActionSeq(10, A::Forward));
  const auto b = path_graph(ActionSeq(10, A::Left));
  try {
    ged(a, b, EditCostModel::strict_model(), 20);
    FAIL();
  } catch (const LimitError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("22"), std::string::npos);
    EXPECT_NE(msg.find("--ged-node-limit"), std::string::npos);
  }
  EXPECT_NEAR(ged(a, b, EditCostModel::strict_model(), 22), 10.0, 1e-12);
}

TEST(Assignment, MatchesPermutationEnumeration) {
  Rng rng(34);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<double> cost(n * n);
    for (auto& c : cost) c = rng.uniform(0, 10);
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    double best = INFINITY;
    do {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += cost[i * n + static_cast<std::size_t>(perm[i])];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    double total = 0;
    const auto cols = detail::solve_assignment(cost, n, &total);
    double check = 0;
    for (std::size_t i = 0; i < n; ++i) check += cost[i * n + static_cast<std::size_t>(cols[i])];
    EXPECT_NEAR(total, best, 1e-9);
    EXPECT_NEAR(check, best, 1e-9);
  }
}
