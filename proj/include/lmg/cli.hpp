#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "lmg/corpus.hpp"
#include "lmg/graph/landmark_graph.hpp"
#include "lmg/metrics/evaluation.hpp"
#include "lmg/model/config.hpp"
#include "lmg/model/gradcheck.hpp"
#include "lmg/model/network.hpp"
#include "lmg/model/trainer.hpp"
#include "lmg/numerics/checkpoint.hpp"

namespace lmg::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr std::uint64_t kDefaultSeed = 20180601;
inline constexpr const char* kLogLevelEnv = "LMG_LOG_LEVEL";

/// Usage or I/O problem; maps to exit code 2.
class UsageError : public Error {
public:
  using Error::Error;
};

struct Options {
  std::optional<std::string> config_file;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = kDefaultSeed;

  std::string corpus;
  std::string embeddings;
  std::string out;
  std::string checkpoint;
  int fold = 0;
  std::optional<int> epochs;
  int checkpoint_every = 1;
  std::string split = "all";

  std::string gold;
  std::vector<std::string> preds;
  std::size_t ged_node_limit = kDefaultGedNodeLimit;
  bool json = false;

  std::string break_backward;
  double tolerance = 1e-4;

  std::string records;

  std::size_t routes = 100;
  int min_sentences = 1;
  int max_sentences = 3;
  int max_clauses = 3;
};

/// Filesystem-safe form of an identifier.
inline std::string safe_name(const std::string& s) {
  std::string out;
  for (unsigned char c : s) out += (std::isalnum(c) || c == '-' || c == '.') ? static_cast<char>(c) : '_';
  return out.empty() ? "_" : out;
}

inline std::string sentence_file_stem(const std::string& route_id, int sentence_id) {
  return safe_name(route_id) + "_" + std::to_string(sentence_id);
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(what + " file not found: " + path);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw UsageError("short write to '" + path.string() + "'");
}

inline void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir + "'");
}

/// Defaults, then the config file, then --set overrides.
inline ModelConfig resolve_config(const Options& o, ModelConfig base = {}) {
  if (o.config_file) {
    require_file(*o.config_file, "config");
    for (const auto& [k, v] : load_key_values(*o.config_file)) base.set(k, v);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    base.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline Vocabulary make_vocabulary(const Corpus& corpus, const ModelConfig& cfg, const std::string& embeddings) {
  auto vocab = build_vocabulary(corpus, cfg.word_embed_dim);
  if (embeddings.empty()) return with_random_embeddings(std::move(vocab), cfg.embedding_seed);
  return load_embeddings(embeddings, std::move(vocab), cfg.embedding_seed);
}

inline std::string echo_config(const ModelConfig& cfg, const std::map<std::string, std::string>& run) {
  std::string out = "# model\n" + format_key_values(cfg.to_map());
  out += "# run\n" + format_key_values(run);
  return out;
}

inline std::string checkpoint_name(int epoch, int epochs) {
  std::ostringstream os;
  const int width = std::max<int>(2, static_cast<int>(std::to_string(epochs).size()));
  os << "epoch_" << std::setw(width) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

inline Corpus load_folded(const std::string& path, std::uint64_t seed) {
  return make_folds(load_corpus(path), seed);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_train(const Options& o, std::ostream& out, spdlog::logger& log) {
  require_file(o.corpus, "corpus");
  if (!o.embeddings.empty()) require_file(o.embeddings, "embeddings");
  if (o.fold < 0 || o.fold >= static_cast<int>(kNumFolds)) throw UsageError("--fold must be 0, 1 or 2");
  if (o.checkpoint_every < 1) throw UsageError("--checkpoint-every must be at least 1");
  ModelConfig cfg = resolve_config(o);
  if (o.epochs) cfg.epochs = *o.epochs;
  if (cfg.epochs < 1) throw UsageError("epochs must be at least 1");
  ensure_dir(o.out);

  const Corpus corpus = load_folded(o.corpus, o.seed);
  const Fold& fold = corpus.folds.at(static_cast<std::size_t>(o.fold));
  std::vector<Instruction> data;
  for (auto idx : {&fold.train, &fold.dev}) {
    for (std::size_t i : *idx) data.push_back(corpus.instructions[i]);
  }
  const Vocabulary vocab = make_vocabulary(corpus, cfg, o.embeddings);

  const std::map<std::string, std::string> run{{"command", "train"},
                                               {"corpus", o.corpus},
                                               {"embeddings", o.embeddings},
                                               {"seed", std::to_string(o.seed)},
                                               {"fold", std::to_string(o.fold)},
                                               {"checkpoint_every", std::to_string(o.checkpoint_every)},
                                               {"train_sentences", std::to_string(data.size())}};
  write_text(fs::path(o.out) / "config.txt", echo_config(cfg, run));

  nlohmann::json meta;
  meta["config"] = cfg.to_map();
  meta["seed"] = o.seed;
  meta["fold"] = o.fold;
  meta["corpus"] = o.corpus;
  meta["embeddings"] = o.embeddings;

  LandmarkModel model(cfg, o.seed);
  log.info("training on {} sentences of fold {} for {} epochs ({} parameters)", data.size(), o.fold, cfg.epochs,
           model.params().scalar_count());
  std::ofstream loss_log(fs::path(o.out) / "loss_log.tsv");
  if (!loss_log) throw UsageError("cannot write loss log in '" + o.out + "'");
  loss_log << "epoch\tloss\taction_loss\tstate_loss\tstep\tlr\n";
  loss_log << std::setprecision(17);

  TrainOptions topts;
  topts.seed = o.seed;
  topts.on_epoch = [&](const EpochStats& s, const LandmarkModel& m) {
    loss_log << s.epoch << '\t' << s.mean_loss << '\t' << s.mean_action_loss << '\t' << s.mean_state_loss << '\t'
             << s.step << '\t' << s.last_lr << '\n';
    loss_log.flush();
    log.info("epoch {}/{} loss {:.6f} (action {:.6f}, state {:.6f}) lr {:.6g}", s.epoch, cfg.epochs, s.mean_loss,
             s.mean_action_loss, s.mean_state_loss, s.last_lr);
    if (s.epoch % o.checkpoint_every == 0 || s.epoch == cfg.epochs) {
      auto m_meta = meta;
      m_meta["epoch"] = s.epoch;
      nn::save_checkpoint((fs::path(o.out) / checkpoint_name(s.epoch, cfg.epochs)).string(), m.params(),
                      cfg.architecture_hash(), m_meta);
    }
  };
  train(model, data, vocab, topts);
  auto final_meta = meta;
  final_meta["epoch"] = cfg.epochs;
  nn::save_checkpoint((fs::path(o.out) / "final.ckpt").string(), model.params(), cfg.architecture_hash(), final_meta);
  out << "trained " << cfg.epochs << " epochs; checkpoints in " << o.out << "\n";
  return kExitOk;
}

/// Model configuration recorded in a checkpoint, with command-line
/// overrides applied on top.
inline ModelConfig config_from_checkpoint(const nn::Checkpoint& ck, const Options& o) {
  ModelConfig cfg;
  if (ck.manifest.meta.contains("config")) {
    for (const auto& [k, v] : ck.manifest.meta.at("config").items()) cfg.set(k, v.get<std::string>());
  }
  return resolve_config(o, cfg);
}

inline std::vector<std::size_t> split_indices(const Corpus& corpus, const std::string& split, int fold,
                                              std::uint64_t seed) {
  if (split == "all") {
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (fold < 0 || fold >= static_cast<int>(kNumFolds)) throw UsageError("--fold must be 0, 1 or 2");
  const Corpus folded = make_folds(corpus, seed);
  const Fold& f = folded.folds.at(static_cast<std::size_t>(fold));
  if (split == "test") return f.test;
  if (split == "dev") return f.dev;
  if (split == "train") return f.train;
  throw UsageError("--split must be all, train, dev or test");
}

/// Writes one DOT file per sentence and one stitched DOT per multi-sentence
/// route, plus structured graph records. Returns the number of DOT files.
inline std::size_t write_graphs(const std::vector<const Instruction*>& sentences,
                                const std::vector<std::pair<ActionSeq, StateSeq>>& walks, const fs::path& dot_dir,
                                std::ostream* records) {
  std::map<std::string, std::vector<std::pair<int, LandmarkGraph>>> by_route;
  std::vector<std::string> route_order;
  std::size_t files = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& ins = *sentences[i];
    LandmarkGraph g = build_graph(walks[i].first, walks[i].second, ins.token_texts());
    const std::string stem = sentence_file_stem(ins.route_id, ins.sentence_id);
    write_text(dot_dir / (stem + ".dot"), to_dot(g, stem));
    ++files;
    if (records) {
      nlohmann::ordered_json r;
      r["route_id"] = ins.route_id;
      r["sentence_id"] = ins.sentence_id;
      r["graph"] = graph_to_json(g);
      *records << r.dump() << '\n';
    }
    if (!by_route.count(ins.route_id)) route_order.push_back(ins.route_id);
    by_route[ins.route_id].emplace_back(ins.sentence_id, std::move(g));
  }
  for (const auto& rid : route_order) {
    auto& parts = by_route[rid];
    if (parts.size() < 2) continue;
    std::stable_sort(parts.begin(), parts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<LandmarkGraph> graphs;
    for (auto& [sid, g] : parts) graphs.push_back(g);
    const LandmarkGraph route = stitch_route(graphs);
    write_text(dot_dir / (safe_name(rid) + ".dot"), to_dot(route, safe_name(rid)));
    ++files;
    if (records) {
      nlohmann::ordered_json r;
      r["route_id"] = rid;
      r["sentence_id"] = nullptr;
      r["graph"] = graph_to_json(route);
      *records << r.dump() << '\n';
    }
  }
  return files;
}

inline int cmd_predict(const Options& o, std::ostream& out, spdlog::logger& log) {
  require_file(o.checkpoint, "checkpoint");
  require_file(o.corpus, "corpus");
  const nn::Checkpoint ck = nn::load_checkpoint(o.checkpoint);
  const ModelConfig cfg = config_from_checkpoint(ck, o);
  std::string embeddings = o.embeddings;
  if (embeddings.empty() && ck.manifest.meta.contains("embeddings")) {
    embeddings = ck.manifest.meta.at("embeddings").get<std::string>();
  }
  if (!embeddings.empty()) require_file(embeddings, "embeddings");
  ensure_dir(o.out);

  LandmarkModel model(cfg, o.seed);
  nn::restore_params(model.params(), ck);
  const Corpus corpus = load_corpus(o.corpus);
  const std::uint64_t fold_seed = ck.manifest.meta.value("seed", o.seed);
  const auto indices = split_indices(corpus, o.split, o.fold, fold_seed);
  const Vocabulary vocab = make_vocabulary(corpus, cfg, embeddings);

  write_text(fs::path(o.out) / "config.txt",
             echo_config(cfg, {{"command", "predict"},
                               {"checkpoint", o.checkpoint},
                               {"corpus", o.corpus},
                               {"embeddings", embeddings},
                               {"split", o.split},
                               {"fold", std::to_string(o.fold)}}));

  const fs::path dot_dir = fs::path(o.out) / "dot";
  fs::create_directories(dot_dir);
  std::ofstream preds(fs::path(o.out) / "predictions.jsonl");
  std::ofstream graphs(fs::path(o.out) / "graphs.jsonl");
  if (!preds || !graphs) throw UsageError("cannot write predictions in '" + o.out + "'");

  std::vector<const Instruction*> sentences;
  std::vector<std::pair<ActionSeq, StateSeq>> walks;
  std::size_t truncated = 0;
  for (std::size_t i : indices) {
    const auto& ins = corpus.instructions[i];
    const Prediction p = model.predict(ins, vocab);
    truncated += p.truncated;
    preds << prediction_to_json(make_prediction_record(ins, p)).dump() << '\n';
    sentences.push_back(&ins);
    walks.emplace_back(p.actions, p.states);
  }
  const std::size_t files = write_graphs(sentences, walks, dot_dir, &graphs);
  if (truncated) log.warn("{} prediction(s) reached max_decode_len without STOP", truncated);
  out << "predicted " << sentences.size() << " sentence(s); wrote " << files << " DOT file(s) to " << dot_dir.string()
      << "\n";
  return kExitOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out, spdlog::logger& log) {
  require_file(o.gold, "gold corpus");
  if (o.preds.empty()) throw UsageError("at least one --pred file is required");
  const Corpus gold = load_corpus(o.gold);
  std::vector<std::vector<PredictionRecord>> folds;
  for (const auto& p : o.preds) {
    require_file(p, "prediction");
    folds.push_back(load_predictions(p));
    if (folds.back().empty()) throw UsageError("prediction file '" + p + "' is empty");
    log.debug("loaded {} predictions from {}", folds.back().size(), p);
  }
  EvalOptions eo;
  eo.seed = o.seed;
  eo.ged_node_limit = o.ged_node_limit;
  const auto report = evaluate_folds(gold, folds, eo);
  if (!o.out.empty()) {
    const fs::path path(o.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, report.dump(2) + "\n");
    std::map<std::string, std::string> run{{"command", "evaluate"},
                                           {"gold", o.gold},
                                           {"seed", std::to_string(o.seed)},
                                           {"ged_node_limit", std::to_string(o.ged_node_limit)}};
    for (std::size_t i = 0; i < o.preds.size(); ++i) run["pred." + std::to_string(i)] = o.preds[i];
    write_text(fs::path(o.out + ".config.txt"), "# run\n" + format_key_values(run));
  }
  out << (o.json ? report.dump(2) + "\n" : report_text(report));
  return kExitOk;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out, spdlog::logger&) {
  GradCheckOptions go;
  go.seed = o.seed;
  go.tolerance = o.tolerance;
  if (!o.break_backward.empty()) go.fault_op = o.break_backward;
  const auto report = gradient_check_width4(go);
  out << std::left << std::setw(20) << "parameter" << std::right << std::setw(8) << "count" << std::setw(16)
      << "max_rel_error" << std::setw(16) << "max_abs_error" << "\n";
  for (const auto& e : report.params) {
    out << std::left << std::setw(20) << e.name << std::right << std::setw(8) << e.count << std::setw(16)
        << std::scientific << std::setprecision(3) << e.max_rel_error << std::setw(16) << e.max_abs_error
        << std::defaultfloat << "\n";
  }
  out << "max relative error " << std::scientific << std::setprecision(3) << report.max_rel_error << " (tolerance "
      << report.tolerance << "): " << (report.passed() ? "PASS" : "FAIL") << std::defaultfloat << "\n";
  return report.passed() ? kExitOk : kExitCheckFailed;
}

inline int cmd_export_dot(const Options& o, std::ostream& out, spdlog::logger&) {
  require_file(o.records, "records");
  ensure_dir(o.out);
  std::ifstream in(o.records);
  std::vector<nlohmann::json> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        lines.push_back(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw ParseError(o.records + ":" + std::to_string(lines.size() + 1) + ": " + e.what());
      }
    }
  }

  std::vector<Instruction> owned;
  std::vector<std::pair<ActionSeq, StateSeq>> walks;
  const bool gold_records = !lines.empty() && lines.front().contains("text");
  if (gold_records) {
    std::istringstream ss;
    std::string text;
    for (const auto& j : lines) text += j.dump() + "\n";
    ss.str(text);
    for (auto& ins : parse_corpus(ss, o.records).instructions) {
      if (!ins.has_gold()) throw ValidationError(record_label(ins) + ": record has no actions/states");
      walks.emplace_back(*ins.gold_actions, *ins.gold_states);
      owned.push_back(std::move(ins));
    }
  } else if (!lines.empty()) {
    require_file(o.corpus, "corpus (needed to read tokens of prediction records)");
    const Corpus corpus = load_corpus(o.corpus);
    std::map<std::pair<std::string, int>, const Instruction*> index;
    for (const auto& ins : corpus.instructions) index[{ins.route_id, ins.sentence_id}] = &ins;
    for (const auto& j : lines) {
      const auto p = prediction_from_json(j);
      const auto it = index.find({p.route_id, p.sentence_id});
      if (it == index.end()) {
        throw ValidationError("unknown record: route '" + p.route_id + "' sentence " + std::to_string(p.sentence_id));
      }
      owned.push_back(*it->second);
      walks.emplace_back(p.actions, p.states);
    }
  }
  std::vector<const Instruction*> sentences;
  for (const auto& ins : owned) sentences.push_back(&ins);
  const std::size_t files = write_graphs(sentences, walks, fs::path(o.out), nullptr);
  out << "wrote " << files << " DOT file(s) to " << o.out << "\n";
  return kExitOk;
}

inline int cmd_synth(const Options& o, std::ostream& out, spdlog::logger&) {
  if (o.out.empty()) throw UsageError("--out is required");
  SynthOptions so;
  so.min_sentences = o.min_sentences;
  so.max_sentences = o.max_sentences;
  so.max_clauses = o.max_clauses;
  const Corpus c = generate_synthetic(o.routes, o.seed, so);
  const fs::path path(o.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, serialize_corpus(c));
  out << "wrote " << c.size() << " sentence(s) in " << o.routes << " route(s) to " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_st>(err);
  auto logger = std::make_shared<spdlog::logger>("lmg", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::info);
  if (const char* lvl = std::getenv(kLogLevelEnv)) logger->set_level(spdlog::level::from_str(lvl));
  return logger;
}

/// Runs the command line `args` (without the program name). Returns the
/// process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Landmark graphs from route instructions", "lmg"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "Model config file (key = value lines)");
    sub->add_option("--set", o.overrides, "Config override key=value (repeatable)");
    sub->add_option("--seed", o.seed, "Random seed");
  };

  auto* train = app.add_subcommand("train", "Train on the train+dev split of one fold");
  common(train);
  train->add_option("--corpus", o.corpus, "Annotated corpus (JSON lines)")->required();
  train->add_option("--embeddings", o.embeddings, "Word vectors in text format");
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--fold", o.fold, "Fold index 0..2");
  train->add_option("--epochs", o.epochs, "Override the epoch count");
  train->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval in epochs");

  auto* predict = app.add_subcommand("predict", "Predict actions, landmarks and graphs");
  common(predict);
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  predict->add_option("--corpus", o.corpus, "Input records (JSON lines)")->required();
  predict->add_option("--embeddings", o.embeddings, "Word vectors (default: the training run's)");
  predict->add_option("--out", o.out, "Output directory")->required();
  predict->add_option("--split", o.split, "all, train, dev or test");
  predict->add_option("--fold", o.fold, "Fold index for --split");

  auto* evaluate = app.add_subcommand("evaluate", "Score prediction files against gold records");
  evaluate->add_option("--seed", o.seed, "Simulator seed for turn actions");
  evaluate->add_option("--gold", o.gold, "Gold corpus")->required();
  evaluate->add_option("--pred", o.preds, "Prediction file, one per fold (repeatable)")->required();
  evaluate->add_option("--out", o.out, "Write the JSON report here");
  evaluate->add_option("--ged-node-limit", o.ged_node_limit, "Combined node limit for exact edit distance");
  evaluate->add_flag("--json", o.json, "Print the JSON report instead of text");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  gradcheck->add_option("--seed", o.seed, "Model and dropout seed");
  gradcheck->add_option("--tolerance", o.tolerance, "Maximum relative error");
  gradcheck->add_option("--break-backward", o.break_backward)->group("");

  auto* export_dot = app.add_subcommand("export-dot", "Write DOT graphs for gold or predicted records");
  export_dot->add_option("--records", o.records, "Gold records or predictions (JSON lines)")->required();
  export_dot->add_option("--corpus", o.corpus, "Gold corpus supplying tokens for prediction records");
  export_dot->add_option("--out", o.out, "Output directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  synth->add_option("--out", o.out, "Output corpus file")->required();
  synth->add_option("--routes", o.routes, "Number of routes");
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--min-sentences", o.min_sentences, "Sentences per route, lower bound");
  synth->add_option("--max-sentences", o.max_sentences, "Sentences per route, upper bound");
  synth->add_option("--max-clauses", o.max_clauses, "Clauses per sentence, upper bound");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  auto logger = make_logger(err);
  try {
    if (*train) return cmd_train(o, out, *logger);
    if (*predict) return cmd_predict(o, out, *logger);
    if (*evaluate) return cmd_evaluate(o, out, *logger);
    if (*gradcheck) return cmd_gradcheck(o, out, *logger);
    if (*export_dot) return cmd_export_dot(o, out, *logger);
    if (*synth) return cmd_synth(o, out, *logger);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lmg::cli
