#include <gtest/gtest.h>

#include <sstream>

#include "lmg/metrics/evaluation.hpp"
#include "support/oracles.hpp"

using namespace lmg;

using A = Action;

namespace {

Instruction sentence(const std::string& route, int id, const std::string& text, ActionSeq actions, StateSeq states) {
  Instruction ins;
  ins.route_id = route;
  ins.sentence_id = id;
  ins.raw_text = text;
  ins.tokens = tokenize(text);
  ins.sentence_boundaries = sentence_starts(ins.tokens);
  ins.gold_actions = std::move(actions);
  ins.gold_states = std::move(states);
  return ins;
}

Corpus fixture() {
  Corpus c;
  // "Pass the lamp ." / "Turn left at the wall ." / "Go to the door ."
  c.instructions.push_back(sentence("r1", 0, "Pass the lamp .", {A::Forward, A::Stop}, {{0, 1, 1, 0}, {0, 0, 0, 0}}));
  c.instructions.push_back(sentence("r1", 1, "Turn left at the wall .", {A::Left, A::Forward, A::Stop},
                                    {{0, 0, 0, 1, 1, 0}, {0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0}}));
  c.instructions.push_back(
      sentence("r2", 0, "Go to the door .", {A::Forward, A::Stop}, {{0, 0, 1, 1, 0}, {0, 0, 0, 0, 0}}));
  return c;
}

std::vector<PredictionRecord> copy_gold(const Corpus& c) {
  std::vector<PredictionRecord> out;
  for (const auto& ins : c.instructions) {
    out.push_back(PredictionRecord{ins.route_id, ins.sentence_id, *ins.gold_actions, *ins.gold_states, false});
  }
  return out;
}

}  // namespace

TEST(EvaluateFold, PerfectPredictionsScoreOne) {
  const auto c = fixture();
  const auto r = evaluate_fold(c, copy_gold(c));
  EXPECT_EQ(r["sentences"], 3);
  EXPECT_EQ(r["routes"], 2);
  EXPECT_EQ(r["action_accuracy"], 1.0);
  for (const char* unit : {"sentence", "route"}) {
    for (const auto& [k, v] : r["goal_accuracy"][unit].items()) EXPECT_EQ(v, 1.0) << unit << " " << k;
    EXPECT_EQ(r["graph_similarity"][unit]["sim"], 1.0);
    EXPECT_EQ(r["graph_similarity"][unit]["sim_relaxed"], 1.0);
  }
  for (const char* g : {"step", "step_mean", "sentence", "route"}) {
    for (const char* m : {"jaccard", "precision", "recall", "f1"}) EXPECT_EQ(r["spans"][g][m], 1.0) << g << " " << m;
  }
}

TEST(EvaluateFold, HandComputedErrors) {
  const auto c = fixture();
  auto preds = copy_gold(c);
  // r1#0: predicts "lamp" alone and turns right instead of stopping early.
  preds[0].actions = {A::Right, A::Forward, A::Stop};
  preds[0].states = {{0, 0, 1, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  // r2#0: misses the landmark entirely.
  preds[2].states = {{0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}};
  const auto r = evaluate_fold(c, preds);

  // Matches: r1#0 0 of 3, r1#1 3 of 3, r2#0 2 of 2.
  EXPECT_DOUBLE_EQ(r["action_accuracy"].get<double>(), 5.0 / 8.0);

  // Sentence goals: r1#0 ends at (1,0) against (0,1), the rest are exact.
  EXPECT_DOUBLE_EQ(r["goal_accuracy"]["sentence"]["0"].get<double>(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r["goal_accuracy"]["sentence"]["1"].get<double>(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r["goal_accuracy"]["sentence"]["2"].get<double>(), 1.0);

  // Sentence spans: gold {the lamp, the wall, the door}, predicted {lamp, the wall}.
  const auto& sent = r["spans"]["sentence"];
  EXPECT_DOUBLE_EQ(sent["precision"].get<double>(), 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(sent["recall"].get<double>(), 1.0 / 3.0);
  // Token occurrences: gold 6, predicted 3, shared 3.
  EXPECT_DOUBLE_EQ(sent["jaccard"].get<double>(), 3.0 / 6.0);

  // Graph similarity from the exhaustive oracle, averaged per unit.
  double expected_sent = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto toks = c.instructions[i].token_texts();
    const auto gp = build_graph(preds[i].actions, preds[i].states, toks);
    const auto gg = build_graph(*c.instructions[i].gold_actions, *c.instructions[i].gold_states, toks);
    expected_sent += 1.0 - oracle::brute_force_ged(gp, gg, false) / static_cast<double>(gp.size() + gg.size());
  }
  EXPECT_NEAR(r["graph_similarity"]["sentence"]["sim"].get<double>(), expected_sent / 3.0, 1e-12);
}

TEST(EvaluateFold, MissingGoldStatesMakesBlocksAbsent) {
  auto c = fixture();
  const auto preds = copy_gold(c);
  c.instructions[1].gold_states.reset();
  const auto r = evaluate_fold(c, preds);
  EXPECT_TRUE(r["spans"]["absent"].get<bool>());
  EXPECT_TRUE(r["graph_similarity"]["absent"].get<bool>());
  EXPECT_EQ(r["action_accuracy"], 1.0);
  EXPECT_NE(report_text(evaluate_folds(c, {preds})).find("spans: absent"), std::string::npos);
}

TEST(EvaluateFold, KnownCoordinatesAreUsed) {
  auto c = fixture();
  c.instructions[2].start_pose = Pose{0, 0, 0, Heading::East};
  c.instructions[2].goal_xyz = GridPoint{3, 0, 0};
  const auto preds = copy_gold(c);
  // Only r2 carries coordinates, so the sentence block falls back to gold
  // actions for every unit.
  EXPECT_EQ(evaluate_fold(c, preds)["goal_accuracy"]["sentence"]["0"], 1.0);
  Corpus only_r2;
  only_r2.instructions.push_back(c.instructions[2]);
  const auto r = evaluate_fold(only_r2, {preds[2]});
  // One forward from the origin facing east lands 2 short of x = 3.
  EXPECT_EQ(r["goal_accuracy"]["sentence"]["1"], 0.0);
  EXPECT_EQ(r["goal_accuracy"]["sentence"]["2"], 1.0);
}

TEST(EvaluateFold, InputErrors) {
  const auto c = fixture();
  EXPECT_THROW(evaluate_fold(c, {}), ValidationError);
  auto preds = copy_gold(c);
  preds.push_back(preds[0]);
  EXPECT_THROW(evaluate_fold(c, preds), ValidationError);
  preds = copy_gold(c);
  preds[0].route_id = "nope";
  EXPECT_THROW(evaluate_fold(c, preds), ValidationError);
  preds = copy_gold(c);
  preds[0].states[0].push_back(0);
  EXPECT_THROW(evaluate_fold(c, preds), ValidationError);
}

TEST(EvaluateFolds, MeanIsArithmeticAcrossFolds) {
  const auto c = fixture();
  auto worse = copy_gold(c);
  for (auto& p : worse) p.actions = ActionSeq(p.actions.size(), A::Ascend);
  const auto r = evaluate_folds(c, {copy_gold(c), worse});
  ASSERT_EQ(r["folds"].size(), 2u);
  EXPECT_EQ(r["folds"][1]["action_accuracy"], 0.0);
  EXPECT_DOUBLE_EQ(r["mean"]["action_accuracy"].get<double>(), 0.5);
  const double s0 = r["folds"][0]["graph_similarity"]["route"]["sim"].get<double>();
  const double s1 = r["folds"][1]["graph_similarity"]["route"]["sim"].get<double>();
  EXPECT_DOUBLE_EQ(r["mean"]["graph_similarity"]["route"]["sim"].get<double>(), (s0 + s1) / 2.0);
}

TEST(Predictions, JsonRoundTrip) {
  const PredictionRecord rec{"r9", 4, {A::Turn, A::Stop}, {{1, 1, 0}, {0, 0, 0}}, true};
  const auto j = prediction_to_json(rec);
  EXPECT_EQ(j["spans"][0][0][0], 0);
  EXPECT_EQ(j["spans"][0][0][1], 2);
  std::istringstream in(j.dump() + "\n\n" + j.dump() + "\n");
  const auto back = parse_predictions(in, "mem");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].route_id, "r9");
  EXPECT_EQ(back[0].sentence_id, 4);
  EXPECT_EQ(back[0].actions, rec.actions);
  EXPECT_EQ(back[0].states, rec.states);
  EXPECT_TRUE(back[0].truncated);
  std::istringstream bad("{\"route_id\": 1}\n");
  EXPECT_THROW(parse_predictions(bad, "mem"), Error);
}
