#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmg/corpus.hpp"
#include "lmg/graph/landmark_graph.hpp"
#include "lmg/metrics/ged.hpp"
#include "lmg/metrics/metrics.hpp"
#include "lmg/simulator.hpp"

namespace lmg {

/// One predicted sentence as written by `predict`.
struct PredictionRecord {
  std::string route_id;
  int sentence_id = 0;
  ActionSeq actions;
  StateSeq states;
  bool truncated = false;
};

inline PredictionRecord make_prediction_record(const Instruction& ins, const Prediction& p) {
  return PredictionRecord{ins.route_id, ins.sentence_id, p.actions, p.states, p.truncated};
}

inline nlohmann::ordered_json prediction_to_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["route_id"] = r.route_id;
  j["sentence_id"] = r.sentence_id;
  auto actions = nlohmann::ordered_json::array();
  for (Action a : r.actions) actions.push_back(std::string(action_code(a)));
  j["actions"] = std::move(actions);
  auto states = nlohmann::ordered_json::array();
  auto spans = nlohmann::ordered_json::array();
  for (const auto& row : r.states) {
    auto s = nlohmann::ordered_json::array();
    for (auto bit : row) s.push_back(static_cast<int>(bit));
    states.push_back(std::move(s));
    auto sp = nlohmann::ordered_json::array();
    for (const auto& [b, e] : group_spans(row)) sp.push_back({b, e});
    spans.push_back(std::move(sp));
  }
  j["states"] = std::move(states);
  j["spans"] = std::move(spans);
  j["truncated"] = r.truncated;
  return j;
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("prediction is not an object");
  for (const char* key : {"route_id", "sentence_id", "actions", "states"}) {
    if (!j.contains(key)) throw ParseError(std::string("prediction missing field '") + key + "'");
  }
  PredictionRecord r;
  r.route_id = j.at("route_id").get<std::string>();
  r.sentence_id = j.at("sentence_id").get<int>();
  for (const auto& a : j.at("actions")) r.actions.push_back(parse_action_code(a.get<std::string>()));
  for (const auto& row : j.at("states")) {
    StateVector v;
    for (const auto& bit : row) {
      const int b = bit.get<int>();
      if (b != 0 && b != 1) throw ParseError("state values must be 0 or 1");
      v.push_back(static_cast<std::uint8_t>(b));
    }
    r.states.push_back(std::move(v));
  }
  if (r.actions.size() != r.states.size()) {
    throw ValidationError("prediction for route '" + r.route_id + "' sentence " + std::to_string(r.sentence_id) +
                          " has " + std::to_string(r.actions.size()) + " actions but " +
                          std::to_string(r.states.size()) + " states");
  }
  r.truncated = j.value("truncated", false);
  return r;
}

inline std::vector<PredictionRecord> parse_predictions(std::istream& in, const std::string& source) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open prediction file '" + path + "'");
  return parse_predictions(in, path);
}

struct EvalOptions {
  /// Seeds the simulator's turn draws; each unit mixes in its own ids.
  std::uint64_t seed = 1;
  std::size_t ged_node_limit = kDefaultGedNodeLimit;
  std::vector<double> thresholds = kGoalThresholds;
};

namespace detail {

inline std::uint64_t unit_seed(std::uint64_t seed, const std::string& route_id, std::optional<int> sentence) {
  std::string key = route_id;
  if (sentence) key += "#" + std::to_string(*sentence);
  return seed ^ fnv1a(key);
}

/// Actions of consecutive sentences joined into one route walk, with the
/// STOP of every sentence but the last dropped.
inline ActionSeq concat_route_actions(const std::vector<const ActionSeq*>& parts) {
  ActionSeq out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (Action a : *parts[k]) {
      if (a == Action::Stop && k + 1 < parts.size()) continue;
      out.push_back(a);
    }
  }
  return out;
}

inline nlohmann::ordered_json absent(const std::string& reason) {
  return nlohmann::ordered_json{{"absent", true}, {"reason", reason}};
}

inline nlohmann::ordered_json prf_json(double j, const PRF& r) {
  return nlohmann::ordered_json{{"jaccard", j}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

inline std::string threshold_key(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace detail

/// Scores one fold of predictions against the gold corpus. Blocks whose
/// gold annotation is missing for some evaluated sentence are marked absent.
inline nlohmann::ordered_json evaluate_fold(const Corpus& gold, const std::vector<PredictionRecord>& preds,
                                            const EvalOptions& opts = {}) {
  if (preds.empty()) throw ValidationError("prediction set is empty");
  std::map<std::pair<std::string, int>, const Instruction*> index;
  for (const auto& ins : gold.instructions) index[{ins.route_id, ins.sentence_id}] = &ins;

  struct Unit {
    const Instruction* gold;
    const PredictionRecord* pred;
  };
  std::map<std::string, std::map<int, Unit>> routes;
  for (const auto& p : preds) {
    const auto it = index.find({p.route_id, p.sentence_id});
    if (it == index.end()) {
      throw ValidationError("prediction for unknown record: route '" + p.route_id + "' sentence " +
                            std::to_string(p.sentence_id));
    }
    for (const auto& row : p.states) {
      if (row.size() != it->second->size()) {
        throw ValidationError("prediction for " + record_label(*it->second) + " has a state of length " +
                              std::to_string(row.size()) + " for " + std::to_string(it->second->size()) + " tokens");
      }
    }
    if (!routes[p.route_id].emplace(p.sentence_id, Unit{it->second, &p}).second) {
      throw ValidationError("duplicate prediction for " + record_label(*it->second));
    }
  }

  bool all_actions = true, all_states = true, all_coords = true, route_coords = true;
  for (const auto& [rid, sents] : routes) {
    for (const auto& [sid, u] : sents) {
      all_actions &= u.gold->gold_actions.has_value();
      all_states &= u.gold->gold_states.has_value();
      all_coords &= u.gold->start_pose.has_value() && u.gold->goal_xyz.has_value();
    }
    route_coords &= sents.begin()->second.gold->start_pose.has_value() && sents.rbegin()->second.gold->goal_xyz.has_value();
  }

  nlohmann::ordered_json report;
  report["sentences"] = preds.size();
  report["routes"] = routes.size();

  // Action accuracy.
  if (all_actions) {
    AccuracyCounts acc;
    for (const auto& [rid, sents] : routes) {
      for (const auto& [sid, u] : sents) acc.add(u.pred->actions, *u.gold->gold_actions);
    }
    report["action_accuracy"] = acc.value();
  } else {
    report["action_accuracy"] = detail::absent("gold actions missing");
  }

  // Goal accuracy by distance threshold.
  {
    nlohmann::ordered_json goal;
    if (all_coords || all_actions) {
      std::vector<double> dist;
      for (const auto& [rid, sents] : routes) {
        for (const auto& [sid, u] : sents) {
          const auto seed = detail::unit_seed(opts.seed, rid, sid);
          if (all_coords) {
            dist.push_back(goal_distance(u.pred->actions, *u.gold->start_pose, *u.gold->goal_xyz, seed));
          } else {
            dist.push_back(goal_distance(u.pred->actions, *u.gold->gold_actions, seed));
          }
        }
      }
      nlohmann::ordered_json row;
      const auto acc = goal_accuracy(dist, opts.thresholds);
      for (std::size_t i = 0; i < acc.size(); ++i) row[detail::threshold_key(opts.thresholds[i])] = acc[i];
      goal["sentence"] = std::move(row);
    } else {
      goal["sentence"] = detail::absent("no gold coordinates and no gold actions");
    }
    if (route_coords || all_actions) {
      std::vector<double> dist;
      for (const auto& [rid, sents] : routes) {
        std::vector<const ActionSeq*> pred_parts, gold_parts;
        for (const auto& [sid, u] : sents) {
          pred_parts.push_back(&u.pred->actions);
          if (u.gold->gold_actions) gold_parts.push_back(&*u.gold->gold_actions);
        }
        const auto seed = detail::unit_seed(opts.seed, rid, std::nullopt);
        const ActionSeq pred_walk = detail::concat_route_actions(pred_parts);
        if (route_coords) {
          const auto& first = *sents.begin()->second.gold;
          const auto& last = *sents.rbegin()->second.gold;
          dist.push_back(goal_distance(pred_walk, *first.start_pose, *last.goal_xyz, seed));
        } else {
          dist.push_back(goal_distance(pred_walk, detail::concat_route_actions(gold_parts), seed));
        }
      }
      nlohmann::ordered_json row;
      const auto acc = goal_accuracy(dist, opts.thresholds);
      for (std::size_t i = 0; i < acc.size(); ++i) row[detail::threshold_key(opts.thresholds[i])] = acc[i];
      goal["route"] = std::move(row);
    } else {
      goal["route"] = detail::absent("no gold coordinates and no gold actions");
    }
    report["goal_accuracy"] = std::move(goal);
  }

  // Landmark spans.
  if (all_states) {
    JaccardCounts j_step, j_sent, j_route;
    PrfCounts p_step, p_sent, p_route;
    StepMeanCounts step_mean;
    for (const auto& [rid, sents] : routes) {
      SpanSet route_pred, route_gold;
      for (const auto& [sid, u] : sents) {
        const auto tokens = u.gold->token_texts();
        const SpanSet sp = spans_from_states(rid, sid, u.pred->states, tokens);
        const SpanSet sg = spans_from_states(rid, sid, *u.gold->gold_states, tokens);
        j_step.add(token_keys(sp, Granularity::Step), token_keys(sg, Granularity::Step));
        j_sent.add(token_keys(sp, Granularity::Sentence), token_keys(sg, Granularity::Sentence));
        p_step.add(span_keys(sp, Granularity::Step), span_keys(sg, Granularity::Step));
        p_sent.add(span_keys(sp, Granularity::Sentence), span_keys(sg, Granularity::Sentence));
        step_mean.add(sp, sg);
        route_pred.insert(route_pred.end(), sp.begin(), sp.end());
        route_gold.insert(route_gold.end(), sg.begin(), sg.end());
      }
      j_route.add(token_keys(route_pred, Granularity::Route), token_keys(route_gold, Granularity::Route));
      p_route.add(span_keys(route_pred, Granularity::Route), span_keys(route_gold, Granularity::Route));
    }
    nlohmann::ordered_json spans;
    spans["step"] = detail::prf_json(j_step.value(), p_step.value());
    spans["step_mean"] = detail::prf_json(step_mean.jaccard_value(), step_mean.value());
    spans["sentence"] = detail::prf_json(j_sent.value(), p_sent.value());
    spans["route"] = detail::prf_json(j_route.value(), p_route.value());
    report["spans"] = std::move(spans);
  } else {
    report["spans"] = detail::absent("gold states missing");
  }

  // Graph similarity.
  if (all_actions && all_states) {
    double sent_sim = 0.0, sent_rel = 0.0, route_sim = 0.0, route_rel = 0.0;
    std::size_t n_sent = 0;
    for (const auto& [rid, sents] : routes) {
      std::vector<LandmarkGraph> gp, gg;
      for (const auto& [sid, u] : sents) {
        const auto tokens = u.gold->token_texts();
        gp.push_back(build_graph(u.pred->actions, u.pred->states, tokens));
        gg.push_back(build_graph(*u.gold->gold_actions, *u.gold->gold_states, tokens));
        sent_sim += graph_similarity(gp.back(), gg.back(), false, opts.ged_node_limit);
        sent_rel += graph_similarity(gp.back(), gg.back(), true, opts.ged_node_limit);
        ++n_sent;
      }
      const auto rp = stitch_route(gp), rg = stitch_route(gg);
      route_sim += graph_similarity(rp, rg, false, opts.ged_node_limit);
      route_rel += graph_similarity(rp, rg, true, opts.ged_node_limit);
    }
    const auto nr = static_cast<double>(routes.size());
    nlohmann::ordered_json sim;
    sim["sentence"] = {{"sim", sent_sim / static_cast<double>(n_sent)}, {"sim_relaxed", sent_rel / static_cast<double>(n_sent)}};
    sim["route"] = {{"sim", route_sim / nr}, {"sim_relaxed", route_rel / nr}};
    report["graph_similarity"] = std::move(sim);
  } else {
    report["graph_similarity"] = detail::absent("gold actions or states missing");
  }
  return report;
}

namespace detail {

/// Element-wise mean of numeric leaves; a block absent in any fold stays
/// absent.
inline nlohmann::ordered_json mean_of(const std::vector<const nlohmann::ordered_json*>& xs) {
  const auto& first = *xs.front();
  for (const auto* x : xs) {
    if (x->is_object() && x->contains("absent")) return *x;
  }
  if (first.is_number()) {
    double s = 0.0;
    for (const auto* x : xs) s += x->get<double>();
    return s / static_cast<double>(xs.size());
  }
  if (first.is_object()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [key, value] : first.items()) {
      std::vector<const nlohmann::ordered_json*> children;
      for (const auto* x : xs) children.push_back(&x->at(key));
      out[key] = mean_of(children);
    }
    return out;
  }
  return first;
}

}  // namespace detail

/// Report over several folds: each fold's block plus their arithmetic mean.
inline nlohmann::ordered_json evaluate_folds(const Corpus& gold, const std::vector<std::vector<PredictionRecord>>& folds,
                                             const EvalOptions& opts = {}) {
  if (folds.empty()) throw ValidationError("no prediction sets to evaluate");
  nlohmann::ordered_json report;
  auto per_fold = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < folds.size(); ++k) {
    auto block = evaluate_fold(gold, folds[k], opts);
    nlohmann::ordered_json entry;
    entry["fold"] = k;
    for (auto& [key, value] : block.items()) entry[key] = value;
    per_fold.push_back(std::move(entry));
  }
  std::vector<const nlohmann::ordered_json*> ptrs;
  for (const auto& f : per_fold) ptrs.push_back(&f);
  nlohmann::ordered_json mean;
  for (const char* key : {"action_accuracy", "goal_accuracy", "spans", "graph_similarity"}) {
    std::vector<const nlohmann::ordered_json*> children;
    for (const auto* f : ptrs) children.push_back(&f->at(key));
    mean[key] = detail::mean_of(children);
  }
  report["folds"] = std::move(per_fold);
  report["mean"] = std::move(mean);
  return report;
}

namespace detail {

inline std::string pct(const nlohmann::ordered_json& v) {
  if (!v.is_number()) return "absent";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << 100.0 * v.get<double>();
  return os.str();
}

inline void text_block(std::ostringstream& os, const nlohmann::ordered_json& b) {
  os << "  action accuracy: " << pct(b.at("action_accuracy")) << "\n";
  for (const char* unit : {"sentence", "route"}) {
    const auto& g = b.at("goal_accuracy").at(unit);
    os << "  goal accuracy (" << unit << "):";
    if (g.contains("absent")) {
      os << " absent\n";
      continue;
    }
    for (const auto& [t, v] : g.items()) os << " d<=" << t << " " << pct(v);
    os << "\n";
  }
  const auto& s = b.at("spans");
  if (s.contains("absent")) {
    os << "  spans: absent\n";
  } else {
    for (const char* g : {"step", "step_mean", "sentence", "route"}) {
      const auto& r = s.at(g);
      os << "  spans (" << g << "): J " << pct(r.at("jaccard")) << " P " << pct(r.at("precision")) << " R "
         << pct(r.at("recall")) << " F1 " << pct(r.at("f1")) << "\n";
    }
  }
  const auto& gs = b.at("graph_similarity");
  if (gs.contains("absent")) {
    os << "  graph similarity: absent\n";
  } else {
    for (const char* u : {"sentence", "route"}) {
      os << "  graph similarity (" << u << "): sim " << pct(gs.at(u).at("sim")) << " sim_relaxed "
         << pct(gs.at(u).at("sim_relaxed")) << "\n";
    }
  }
}

}  // namespace detail

/// Human-readable rendering of an `evaluate_folds` report, in percent.
inline std::string report_text(const nlohmann::ordered_json& report) {
  std::ostringstream os;
  for (const auto& f : report.at("folds")) {
    os << "fold " << f.at("fold").get<int>() << " (" << f.at("sentences").get<int>() << " sentences, "
       << f.at("routes").get<int>() << " routes)\n";
    detail::text_block(os, f);
  }
  os << "mean over " << report.at("folds").size() << " fold(s)\n";
  detail::text_block(os, report.at("mean"));
  return os.str();
}

}  // namespace lmg
