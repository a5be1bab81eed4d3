#include <gtest/gtest.h>

#include <cmath>

#include "lmg/simulator.hpp"

using namespace lmg;

using A = Action;

TEST(Execute, StepwiseRules) {
  const Pose end = execute({A::Forward, A::Forward, A::Right, A::Forward, A::Stop}, Pose{}, 1);
  EXPECT_EQ(end, (Pose{1, 2, 0, Heading::East}));
}

TEST(Execute, StandAndStopAreNoOps) {
  const Pose start{3, -2, 1, Heading::West};
  EXPECT_EQ(execute({A::Stand, A::Stop}, start, 1), start);
}

TEST(Execute, MoveIsForwardAndVerticalActionsChangeZ) {
  EXPECT_EQ(execute({A::Move, A::Ascend, A::Ascend, A::Descend}, Pose{}, 1), (Pose{0, 1, 1, Heading::North}));
  EXPECT_EQ(execute({A::Left, A::Move}, Pose{}, 1), (Pose{-1, 0, 0, Heading::West}));
}

TEST(Execute, FourTurnsRestoreHeading) {
  for (A a : {A::Left, A::Right}) {
    const Pose end = execute({a, a, a, a}, Pose{}, 1);
    EXPECT_EQ(end.heading, Heading::North);
  }
}

TEST(Execute, TurnIsSeededAndUsesBothDirections) {
  const ActionSeq turn{A::Turn, A::Stop};
  EXPECT_EQ(execute(turn, Pose{}, 42), execute(turn, Pose{}, 42));
  int lefts = 0, rights = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto h = execute(turn, Pose{}, seed).heading;
    ASSERT_TRUE(h == Heading::West || h == Heading::East);
    (h == Heading::West ? lefts : rights)++;
  }
  EXPECT_GT(lefts, 150);
  EXPECT_GT(rights, 150);
}

TEST(GoalDistance, Examples) {
  EXPECT_EQ(goal_distance({A::Forward, A::Left, A::Stop}, {A::Forward, A::Left, A::Stop}, 1), 0.0);
  EXPECT_DOUBLE_EQ(goal_distance({A::Forward, A::Stop}, {A::Forward, A::Forward, A::Stop}, 1), 1.0);
  EXPECT_DOUBLE_EQ(goal_distance({A::Forward, A::Stop}, {A::Right, A::Forward, A::Stop}, 1), std::sqrt(2.0));
}

TEST(GoalDistance, SymmetricAndInvariantToTrailingNoOps) {
  const ActionSeq a{A::Forward, A::Ascend, A::Right, A::Forward};
  const ActionSeq b{A::Left, A::Forward, A::Forward, A::Descend};
  EXPECT_DOUBLE_EQ(goal_distance(a, b, 3), goal_distance(b, a, 3));
  // a ends at (1,1,1), b at (-2,0,-1).
  EXPECT_DOUBLE_EQ(goal_distance(a, b, 3), std::sqrt(14.0));
  ActionSeq padded = a;
  padded.insert(padded.end(), {A::Stand, A::Stop});
  EXPECT_DOUBLE_EQ(goal_distance(padded, b, 3), goal_distance(a, b, 3));
}

TEST(GoalDistance, KnownGoal) {
  const Pose start{5, 5, 0, Heading::South};
  EXPECT_DOUBLE_EQ(goal_distance({A::Forward, A::Forward, A::Stop}, start, GridPoint{5, 3, 0}, 1), 0.0);
  EXPECT_DOUBLE_EQ(goal_distance({A::Stop}, start, GridPoint{8, 9, 0}, 1), 5.0);
}
