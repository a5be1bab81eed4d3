#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lmg/error.hpp"

namespace lmg {

/// The nine traversal actions. Enum order doubles as the CRF label index and
/// as the Viterbi tie-break order.
enum class Action : std::uint8_t {
  Stand = 0,
  Forward,
  Left,
  Right,
  Ascend,
  Descend,
  Turn,
  Move,
  Stop,
};

inline constexpr std::size_t kNumActions = 9;

inline constexpr std::array<Action, kNumActions> kAllActions{
    Action::Stand,  Action::Forward, Action::Left, Action::Right, Action::Ascend,
    Action::Descend, Action::Turn,   Action::Move, Action::Stop};

inline constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

inline Action action_from_index(std::size_t i) {
  if (i >= kNumActions) throw ValidationError("action index out of range: " + std::to_string(i));
  return static_cast<Action>(i);
}

/// Corpus code: single letters s/f/l/r/a/d/t/m, or "STOP".
inline std::string_view action_code(Action a) {
  static constexpr std::array<std::string_view, kNumActions> codes{
      "s", "f", "l", "r", "a", "d", "t", "m", "STOP"};
  return codes[index_of(a)];
}

inline std::string_view action_name(Action a) {
  static constexpr std::array<std::string_view, kNumActions> names{
      "stand", "forward", "left", "right", "ascend", "descend", "turn", "move", "STOP"};
  return names[index_of(a)];
}

inline Action parse_action_code(std::string_view code) {
  for (Action a : kAllActions) {
    if (action_code(a) == code) return a;
  }
  throw ParseError("unknown action '" + std::string(code) + "'");
}

using ActionSeq = std::vector<Action>;

/// One binary vector per decoding step, each as long as the instruction.
using StateVector = std::vector<std::uint8_t>;
using StateSeq = std::vector<StateVector>;

/// Checks the gold-sequence contract: STOP only as the last element, and
/// required as the last element when `require_final_stop` is set.
inline void validate_action_seq(const ActionSeq& actions, bool require_final_stop,
                                const std::string& context) {
  for (std::size_t t = 0; t + 1 < actions.size(); ++t) {
    if (actions[t] == Action::Stop) {
      throw ValidationError(context + ": STOP at position " + std::to_string(t) +
                            " is not the final action");
    }
  }
  if (require_final_stop && (actions.empty() || actions.back() != Action::Stop)) {
    throw ValidationError(context + ": gold action sequence must end with STOP");
  }
}

inline std::string format_actions(const ActionSeq& actions) {
  std::string out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ' ';
    out += action_code(actions[i]);
  }
  return out;
}

}  // namespace lmg
