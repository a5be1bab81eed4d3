#pragma once

#include <cmath>
#include <cstdint>

#include "lmg/action.hpp"
#include "lmg/pose.hpp"
#include "lmg/rng.hpp"

namespace lmg {

/// Applies one action. `turn` draws left/right with equal probability from
/// `rng`; `move` is treated as forward.
inline Pose apply_action(Pose p, Action a, Rng& rng) {
  switch (a) {
    case Action::Forward:
    case Action::Move:
      switch (p.heading) {
        case Heading::North: ++p.y; break;
        case Heading::East: ++p.x; break;
        case Heading::South: --p.y; break;
        case Heading::West: --p.x; break;
      }
      break;
    case Action::Left: p.heading = turn_left(p.heading); break;
    case Action::Right: p.heading = turn_right(p.heading); break;
    case Action::Turn: p.heading = rng.bernoulli(0.5) ? turn_left(p.heading) : turn_right(p.heading); break;
    case Action::Ascend: ++p.z; break;
    case Action::Descend: --p.z; break;
    case Action::Stand:
    case Action::Stop: break;
  }
  return p;
}

inline Pose execute(const ActionSeq& actions, Pose start, Rng& rng) {
  for (Action a : actions) start = apply_action(start, a, rng);
  return start;
}

inline Pose execute(const ActionSeq& actions, Pose start, std::uint64_t seed) {
  Rng rng(seed);
  return execute(actions, start, rng);
}

inline double euclidean(const GridPoint& a, const GridPoint& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline GridPoint position(const Pose& p) { return {p.x, p.y, p.z}; }

/// Distance between the endpoints of two action sequences run from the
/// origin facing north, each with its own generator seeded by `seed`.
inline double goal_distance(const ActionSeq& pred, const ActionSeq& gold, std::uint64_t seed) {
  const Pose a = execute(pred, Pose{}, seed);
  const Pose b = execute(gold, Pose{}, seed);
  return euclidean(position(a), position(b));
}

/// Distance from the endpoint of `pred`, run from `start`, to a known goal.
inline double goal_distance(const ActionSeq& pred, const Pose& start, const GridPoint& goal, std::uint64_t seed) {
  return euclidean(position(execute(pred, start, seed)), goal);
}

}  // namespace lmg
