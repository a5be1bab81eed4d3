#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "lmg/action.hpp"
#include "lmg/model/network.hpp"

namespace lmg {

/// Positional matches over max(|pred|, |gold|), STOP included.
struct AccuracyCounts {
  std::size_t matches = 0;
  std::size_t total = 0;

  void add(const ActionSeq& pred, const ActionSeq& gold) {
    const std::size_t n = std::min(pred.size(), gold.size());
    for (std::size_t i = 0; i < n; ++i) matches += pred[i] == gold[i];
    total += std::max(pred.size(), gold.size());
  }
  double value() const { return total == 0 ? 1.0 : static_cast<double>(matches) / static_cast<double>(total); }
};

inline double action_accuracy(const ActionSeq& pred, const ActionSeq& gold) {
  AccuracyCounts c;
  c.add(pred, gold);
  return c.value();
}

/// Most frequent gold action over `golds`; ties go to the lower action index.
inline Action majority_action(const std::vector<ActionSeq>& golds) {
  std::array<std::size_t, kNumActions> counts{};
  for (const auto& g : golds) {
    for (Action a : g) ++counts[index_of(a)];
  }
  const auto it = std::max_element(counts.begin(), counts.end());
  return action_from_index(static_cast<std::size_t>(it - counts.begin()));
}

/// Accuracy of predicting `label` at every gold step.
inline double majority_baseline_accuracy(const std::vector<ActionSeq>& golds, Action label) {
  AccuracyCounts c;
  for (const auto& g : golds) c.add(ActionSeq(g.size(), label), g);
  return c.value();
}

inline const std::vector<double> kGoalThresholds = {0.0, 1.0, 2.0, 3.0};

/// Fraction of distances at or below each threshold.
inline std::vector<double> goal_accuracy(const std::vector<double>& distances,
                                         const std::vector<double>& thresholds = kGoalThresholds) {
  std::vector<double> out;
  for (double t : thresholds) {
    std::size_t hit = 0;
    for (double d : distances) hit += d <= t + 1e-9;
    out.push_back(distances.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(distances.size()));
  }
  return out;
}

/// One landmark span with its source location.
struct LandmarkSpan {
  std::string route_id;
  int sentence_id = 0;
  std::size_t step = 0;
  std::size_t start = 0;  // half-open token range
  std::size_t end = 0;
  std::vector<std::string> tokens;
};

using SpanSet = std::vector<LandmarkSpan>;

/// Spans of every step of a state sequence over `tokens`.
inline SpanSet spans_from_states(const std::string& route_id, int sentence_id, const StateSeq& states,
                                 const std::vector<std::string>& tokens) {
  SpanSet out;
  for (std::size_t t = 0; t < states.size(); ++t) {
    for (const auto& [b, e] : group_spans(states[t])) {
      if (e > tokens.size()) throw ValidationError("span exceeds the sentence length");
      out.push_back(LandmarkSpan{route_id, sentence_id, t, b, e,
                                 std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(b),
                                                          tokens.begin() + static_cast<std::ptrdiff_t>(e))});
    }
  }
  return out;
}

enum class Granularity { Step, Sentence, Route };

inline const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::Step: return "step";
    case Granularity::Sentence: return "sentence";
    case Granularity::Route: return "route";
  }
  return "?";
}

/// Identity of a span at a granularity. Step spans must agree on step and
/// range, sentence spans on range, route spans on surface text.
using SpanKey = std::tuple<std::string, int, std::size_t, std::size_t, std::size_t, std::vector<std::string>>;

inline SpanKey span_key(const LandmarkSpan& s, Granularity g) {
  switch (g) {
    case Granularity::Step: return {s.route_id, s.sentence_id, s.step, s.start, s.end, {}};
    case Granularity::Sentence: return {s.route_id, s.sentence_id, 0, s.start, s.end, {}};
    case Granularity::Route: return {s.route_id, 0, 0, 0, 0, s.tokens};
  }
  return {};
}

inline std::set<SpanKey> span_keys(const SpanSet& spans, Granularity g) {
  std::set<SpanKey> out;
  for (const auto& s : spans) out.insert(span_key(s, g));
  return out;
}

/// Token occurrences covered by spans. Step and sentence occurrences are
/// keyed by position, so repeated words stay distinct; route occurrences are
/// keyed by surface word, matching how route graphs identify landmarks.
using TokenKey = std::tuple<std::string, int, std::size_t, std::size_t, std::string>;

inline std::set<TokenKey> token_keys(const SpanSet& spans, Granularity g) {
  std::set<TokenKey> out;
  for (const auto& s : spans) {
    for (std::size_t i = s.start; i < s.end; ++i) {
      switch (g) {
        case Granularity::Step: out.insert({s.route_id, s.sentence_id, s.step, i, {}}); break;
        case Granularity::Sentence: out.insert({s.route_id, s.sentence_id, 0, i, {}}); break;
        case Granularity::Route: out.insert({s.route_id, 0, 0, 0, s.tokens[i - s.start]}); break;
      }
    }
  }
  return out;
}

/// Pooled intersection and union sizes for a micro-averaged Jaccard index.
struct JaccardCounts {
  std::size_t intersection = 0;
  std::size_t unions = 0;

  template <class Key>
  void add(const std::set<Key>& p, const std::set<Key>& g) {
    std::size_t inter = 0;
    for (const auto& k : p) inter += g.count(k);
    intersection += inter;
    unions += p.size() + g.size() - inter;
  }
  double value() const { return unions == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(unions); }
};

/// Jaccard index over token occurrences; both empty gives 1.
inline double jaccard(const SpanSet& pred, const SpanSet& gold, Granularity g = Granularity::Sentence) {
  JaccardCounts c;
  c.add(token_keys(pred, g), token_keys(gold, g));
  return c.value();
}

struct PRF {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

/// Exact-match span counts, micro-averaged when accumulated.
struct PrfCounts {
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  void add(const std::set<SpanKey>& p, const std::set<SpanKey>& g) {
    for (const auto& k : p) correct += g.count(k);
    predicted += p.size();
    gold += g.size();
  }

  PRF value() const {
    if (predicted == 0 && gold == 0) return {};
    PRF r;
    r.precision = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
    r.recall = gold ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
  }
};

inline PRF span_prf(const SpanSet& pred, const SpanSet& gold, Granularity g) {
  PrfCounts c;
  c.add(span_keys(pred, g), span_keys(gold, g));
  return c.value();
}

/// Per-step scores averaged over every step where either side has a span,
/// so steps with an empty prediction count as zero.
struct StepMeanCounts {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
  std::size_t steps = 0;

  void add(const SpanSet& pred, const SpanSet& gold) {
    std::map<std::tuple<std::string, int, std::size_t>, std::pair<SpanSet, SpanSet>> by_step;
    for (const auto& s : pred) by_step[{s.route_id, s.sentence_id, s.step}].first.push_back(s);
    for (const auto& s : gold) by_step[{s.route_id, s.sentence_id, s.step}].second.push_back(s);
    for (const auto& [key, sides] : by_step) {
      const PRF r = span_prf(sides.first, sides.second, Granularity::Step);
      precision += r.precision;
      recall += r.recall;
      f1 += r.f1;
      jaccard += lmg::jaccard(sides.first, sides.second, Granularity::Step);
      ++steps;
    }
  }

  PRF value() const {
    if (steps == 0) return {};
    const auto n = static_cast<double>(steps);
    return PRF{precision / n, recall / n, f1 / n};
  }
  double jaccard_value() const { return steps == 0 ? 1.0 : jaccard / static_cast<double>(steps); }
};

}  // namespace lmg
