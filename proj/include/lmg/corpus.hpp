#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lmg/action.hpp"
#include "lmg/error.hpp"
#include "lmg/pose.hpp"
#include "lmg/rng.hpp"

namespace lmg {

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

/// The 17-tag universal part-of-speech set; tag position is the one-hot index.
inline constexpr std::array<std::string_view, 17> kUniversalPosTags{
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

inline std::optional<std::size_t> pos_tag_index(std::string_view tag) {
  for (std::size_t i = 0; i < kUniversalPosTags.size(); ++i) {
    if (kUniversalPosTags[i] == tag) return i;
  }
  return std::nullopt;
}

struct Token {
  std::string text;
  std::size_t index = 0;
  std::optional<std::string> pos_tag;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Instruction {
  std::string route_id;
  int sentence_id = 0;
  std::string raw_text;
  std::vector<Token> tokens;
  /// Token index at which each sentence of `raw_text` starts.
  std::vector<std::size_t> sentence_boundaries;
  std::optional<ActionSeq> gold_actions;
  std::optional<StateSeq> gold_states;
  std::optional<Pose> start_pose;
  std::optional<GridPoint> goal_xyz;
  /// Whether the record carried its own `tokens` field; preserved for
  /// faithful re-serialization.
  bool tokens_supplied = false;

  std::size_t size() const { return tokens.size(); }
  bool has_gold() const { return gold_actions.has_value() && gold_states.has_value(); }

  std::vector<std::string> token_texts() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
  }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;

  friend bool operator==(const Fold&, const Fold&) = default;
};

struct Corpus {
  std::vector<Instruction> instructions;
  std::vector<Fold> folds;

  std::size_t size() const { return instructions.size(); }

  /// Distinct route ids in order of first appearance.
  std::vector<std::string> route_ids() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& ins : instructions) {
      if (seen.insert(ins.route_id).second) out.push_back(ins.route_id);
    }
    return out;
  }

  Corpus subset(std::span<const std::size_t> indices) const {
    Corpus out;
    out.instructions.reserve(indices.size());
    for (std::size_t i : indices) out.instructions.push_back(instructions.at(i));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

namespace detail {

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences; keep them inside words.
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool is_sentence_final(std::string_view tok) {
  return tok == "." || tok == "!" || tok == "?";
}

}  // namespace detail

/// Splits into maximal alphanumeric runs and single punctuation characters.
/// Case is preserved.
inline std::vector<Token> tokenize(std::string_view raw) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < raw.size()) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (detail::is_word_byte(c)) {
      while (j < raw.size() && detail::is_word_byte(static_cast<unsigned char>(raw[j]))) ++j;
    }
    out.push_back(Token{std::string(raw.substr(i, j - i)), out.size(), std::nullopt});
    i = j;
  }
  return out;
}

inline std::vector<std::size_t> sentence_starts(const std::vector<Token>& tokens) {
  std::vector<std::size_t> starts;
  if (tokens.empty()) return starts;
  starts.push_back(0);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (detail::is_sentence_final(tokens[i].text)) starts.push_back(i + 1);
  }
  return starts;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline std::string record_label(const Instruction& ins) {
  return "route '" + ins.route_id + "' sentence " + std::to_string(ins.sentence_id);
}

inline void validate_instruction(const Instruction& ins) {
  const std::string where = record_label(ins);
  for (std::size_t i = 0; i < ins.tokens.size(); ++i) {
    const auto& tok = ins.tokens[i];
    if (tok.text.empty()) throw ValidationError(where + ": empty token at " + std::to_string(i));
    if (std::any_of(tok.text.begin(), tok.text.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      throw ValidationError(where + ": token '" + tok.text + "' contains whitespace");
    }
    if (tok.index != i) throw ValidationError(where + ": token index mismatch at " + std::to_string(i));
    if (tok.pos_tag && !pos_tag_index(*tok.pos_tag)) {
      throw ValidationError(where + ": unknown POS tag '" + *tok.pos_tag + "'");
    }
  }
  for (std::size_t k = 0; k < ins.sentence_boundaries.size(); ++k) {
    const auto b = ins.sentence_boundaries[k];
    if (b >= ins.tokens.size() || (k > 0 && b <= ins.sentence_boundaries[k - 1])) {
      throw ValidationError(where + ": sentence boundaries must be strictly increasing and in range");
    }
  }
  if (ins.gold_actions) validate_action_seq(*ins.gold_actions, true, where);
  if (ins.gold_actions && ins.gold_states &&
      ins.gold_actions->size() != ins.gold_states->size()) {
    throw ValidationError(where + ": " + std::to_string(ins.gold_actions->size()) +
                          " actions but " + std::to_string(ins.gold_states->size()) +
                          " states (lengths must match)");
  }
  if (ins.gold_states) {
    for (std::size_t t = 0; t < ins.gold_states->size(); ++t) {
      const auto& s = (*ins.gold_states)[t];
      if (s.size() != ins.tokens.size()) {
        throw ValidationError(where + ": state " + std::to_string(t) + " has length " +
                              std::to_string(s.size()) + ", expected " +
                              std::to_string(ins.tokens.size()));
      }
      for (auto bit : s) {
        if (bit > 1) throw ValidationError(where + ": state values must be 0 or 1");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Canonical line-delimited record format
// ---------------------------------------------------------------------------

inline Instruction parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record is not an object");
  for (const char* key : {"route_id", "sentence_id", "text"}) {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  }
  Instruction ins;
  ins.route_id = j.at("route_id").get<std::string>();
  ins.sentence_id = j.at("sentence_id").get<int>();
  ins.raw_text = j.at("text").get<std::string>();

  if (j.contains("tokens")) {
    ins.tokens_supplied = true;
    for (const auto& t : j.at("tokens")) {
      ins.tokens.push_back(Token{t.get<std::string>(), ins.tokens.size(), std::nullopt});
    }
  } else {
    ins.tokens = tokenize(ins.raw_text);
  }
  if (j.contains("pos")) {
    const auto& pos = j.at("pos");
    if (pos.size() != ins.tokens.size()) {
      throw ParseError("pos has " + std::to_string(pos.size()) + " tags for " +
                       std::to_string(ins.tokens.size()) + " tokens");
    }
    for (std::size_t i = 0; i < pos.size(); ++i) ins.tokens[i].pos_tag = pos[i].get<std::string>();
  }
  ins.sentence_boundaries = sentence_starts(ins.tokens);

  if (j.contains("actions")) {
    ActionSeq actions;
    for (const auto& a : j.at("actions")) actions.push_back(parse_action_code(a.get<std::string>()));
    ins.gold_actions = std::move(actions);
  }
  if (j.contains("states")) {
    StateSeq states;
    for (const auto& row : j.at("states")) {
      StateVector v;
      for (const auto& bit : row) {
        const int b = bit.get<int>();
        if (b != 0 && b != 1) throw ParseError("state values must be 0 or 1");
        v.push_back(static_cast<std::uint8_t>(b));
      }
      states.push_back(std::move(v));
    }
    ins.gold_states = std::move(states);
  }
  if (j.contains("start_pose")) {
    const auto& p = j.at("start_pose");
    if (p.size() != 4) throw ParseError("start_pose must be [x, y, z, heading]");
    const int h = p[3].get<int>();
    if (h < 0 || h > 3) throw ParseError("start_pose heading must be 0..3");
    ins.start_pose = Pose{p[0].get<int>(), p[1].get<int>(), p[2].get<int>(), static_cast<Heading>(h)};
  }
  if (j.contains("goal_xyz")) {
    const auto& g = j.at("goal_xyz");
    if (g.size() != 3) throw ParseError("goal_xyz must be [x, y, z]");
    ins.goal_xyz = GridPoint{g[0].get<int>(), g[1].get<int>(), g[2].get<int>()};
  }
  validate_instruction(ins);
  return ins;
}

inline nlohmann::ordered_json record_to_json(const Instruction& ins) {
  nlohmann::ordered_json j;
  j["route_id"] = ins.route_id;
  j["sentence_id"] = ins.sentence_id;
  j["text"] = ins.raw_text;
  if (ins.tokens_supplied) j["tokens"] = ins.token_texts();
  if (std::any_of(ins.tokens.begin(), ins.tokens.end(), [](const Token& t) { return t.pos_tag.has_value(); })) {
    auto pos = nlohmann::ordered_json::array();
    for (const auto& t : ins.tokens) pos.push_back(t.pos_tag.value_or("X"));
    j["pos"] = std::move(pos);
  }
  if (ins.gold_actions) {
    auto arr = nlohmann::ordered_json::array();
    for (Action a : *ins.gold_actions) arr.push_back(std::string(action_code(a)));
    j["actions"] = std::move(arr);
  }
  if (ins.gold_states) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& row : *ins.gold_states) {
      auto r = nlohmann::ordered_json::array();
      for (auto bit : row) r.push_back(static_cast<int>(bit));
      arr.push_back(std::move(r));
    }
    j["states"] = std::move(arr);
  }
  if (ins.start_pose) {
    const auto& p = *ins.start_pose;
    j["start_pose"] = {p.x, p.y, p.z, static_cast<int>(p.heading)};
  }
  if (ins.goal_xyz) j["goal_xyz"] = *ins.goal_xyz;
  return j;
}

inline std::string serialize_record(const Instruction& ins) { return record_to_json(ins).dump(); }

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& ins : corpus.instructions) {
    out += serialize_record(ins);
    out += '\n';
  }
  return out;
}

/// Parses a whole stream; `source` prefixes error messages.
inline Corpus parse_corpus(std::istream& in, const std::string& source = "<stream>") {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.instructions.push_back(parse_record(nlohmann::json::parse(line)));
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, path);
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file '" + path + "'");
  out << serialize_corpus(corpus);
}

// ---------------------------------------------------------------------------
// SAIL action mapping
// ---------------------------------------------------------------------------

struct SailAction {
  std::string name;  // travel, turn_left, turn_right, null
  int steps = 0;     // used by travel only
};

inline ActionSeq map_sail_actions(std::span<const SailAction> sail) {
  ActionSeq out;
  for (const auto& a : sail) {
    if (a.name == "travel") {
      if (a.steps <= 0) {
        throw ValidationError("travel requires a positive step count, got " + std::to_string(a.steps));
      }
      out.insert(out.end(), static_cast<std::size_t>(a.steps), Action::Forward);
    } else if (a.name == "turn_left") {
      out.push_back(Action::Left);
    } else if (a.name == "turn_right") {
      out.push_back(Action::Right);
    } else if (a.name == "null") {
      out.push_back(Action::Stand);
    } else {
      throw ValidationError("unknown SAIL action '" + a.name + "'");
    }
  }
  out.push_back(Action::Stop);
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and embeddings
// ---------------------------------------------------------------------------

/// Printable ASCII (95 symbols) plus one OTHER bucket.
inline constexpr std::size_t kCharVocabSize = 96;

inline std::size_t char_id(unsigned char c) {
  return (c >= 32 && c <= 126) ? static_cast<std::size_t>(c - 32) : kCharVocabSize - 1;
}

class Vocabulary {
public:
  static constexpr std::size_t kUnknownId = 0;
  static constexpr const char* kUnknownWord = "<unk>";

  explicit Vocabulary(std::size_t dim = 300) : dim_(dim) { add(kUnknownWord); }

  std::size_t add(const std::string& word) {
    auto [it, inserted] = ids_.emplace(word, words_.size());
    if (inserted) {
      words_.push_back(word);
      table_.resize(words_.size() * dim_, 0.0);
    }
    return it->second;
  }

  std::size_t id(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnknownId : it->second;
  }

  bool contains(const std::string& word) const { return ids_.count(word) != 0; }
  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& words() const { return words_; }

  std::span<const double> embedding(std::size_t id) const {
    return std::span<const double>(table_).subspan(id * dim_, dim_);
  }

  void set_embedding(std::size_t id, std::span<const double> row) {
    if (row.size() != dim_) throw ValidationError("embedding row has wrong dimension");
    std::copy(row.begin(), row.end(), table_.begin() + static_cast<std::ptrdiff_t>(id * dim_));
  }

private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<double> table_;
};

/// Vocabulary over every token of the corpus, in first-occurrence order.
inline Vocabulary build_vocabulary(const Corpus& corpus, std::size_t dim = 300) {
  Vocabulary vocab(dim);
  for (const auto& ins : corpus.instructions) {
    for (const auto& t : ins.tokens) vocab.add(t.text);
  }
  return vocab;
}

/// Vocabulary from an explicit word list (e.g. a checkpoint manifest). The
/// first entry must be the unknown-word marker.
inline Vocabulary vocabulary_from_words(const std::vector<std::string>& words, std::size_t dim) {
  if (words.empty() || words.front() != Vocabulary::kUnknownWord) {
    throw ValidationError("vocabulary word list must start with <unk>");
  }
  Vocabulary vocab(dim);
  for (std::size_t i = 1; i < words.size(); ++i) vocab.add(words[i]);
  return vocab;
}

/// Fixed pseudo-random vector for a word: a function of (seed, word) only, so
/// it does not depend on vocabulary order.
inline std::vector<double> oov_vector(const std::string& word, std::uint64_t seed, std::size_t dim) {
  Rng rng(seed ^ fnv1a(word));
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.uniform(-0.05, 0.05);
  return v;
}

inline Vocabulary with_random_embeddings(Vocabulary vocab, std::uint64_t seed) {
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    vocab.set_embedding(id, oov_vector(vocab.words()[id], seed, vocab.dim()));
  }
  return vocab;
}

/// Reads whitespace-separated word vectors (word followed by `vocab.dim()`
/// floats). An optional leading "count dim" header line is skipped. Words
/// absent from the file keep seeded random vectors.
inline Vocabulary load_embeddings(const std::string& path, Vocabulary vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embeddings file '" + path + "'");
  vocab = with_random_embeddings(std::move(vocab), seed);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    row.clear();
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad float '" + field +
                         "' for word '" + word + "'");
      }
    }
    if (line_no == 1 && row.size() == 1) continue;  // "count dim" header
    if (row.size() != vocab.dim()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": word '" + word + "' has " +
                       std::to_string(row.size()) + " values, expected " +
                       std::to_string(vocab.dim()));
    }
    if (vocab.contains(word)) vocab.set_embedding(vocab.id(word), row);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

inline constexpr std::size_t kNumFolds = 3;

/// Three route-disjoint 80/10/10 partitions. Test sets of different folds do
/// not overlap.
inline Corpus make_folds(Corpus corpus, std::uint64_t seed) {
  const auto routes = corpus.route_ids();
  if (routes.size() < 10) {
    throw ValidationError("make_folds needs at least 10 routes, corpus has " +
                          std::to_string(routes.size()));
  }
  std::vector<std::size_t> order(routes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = routes.size();
  const std::size_t held = std::max<std::size_t>(1, (n + 5) / 10);  // round(n / 10)
  std::map<std::string, std::size_t> route_pos;
  for (std::size_t i = 0; i < n; ++i) route_pos[routes[order[i]]] = i;

  corpus.folds.clear();
  for (std::size_t k = 0; k < kNumFolds; ++k) {
    const std::size_t test_begin = k * held;
    const std::size_t dev_begin = (test_begin + held) % n;
    auto in_window = [n](std::size_t p, std::size_t begin, std::size_t len) {
      return (p + n - begin) % n < len;
    };
    Fold fold;
    for (std::size_t i = 0; i < corpus.instructions.size(); ++i) {
      const std::size_t p = route_pos.at(corpus.instructions[i].route_id);
      if (in_window(p, test_begin, held)) {
        fold.test.push_back(i);
      } else if (in_window(p, dev_begin, held)) {
        fold.dev.push_back(i);
      } else {
        fold.train.push_back(i);
      }
    }
    corpus.folds.push_back(std::move(fold));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthOptions {
  int min_sentences = 1;
  int max_sentences = 3;
  int max_clauses = 3;
};

namespace detail {

struct Clause {
  std::vector<std::string> words;
  ActionSeq actions;
  // Landmark token range [begin, end) within `words`, attached to the step
  // index `landmark_step` within `actions`.
  std::optional<std::pair<std::size_t, std::size_t>> landmark;
  std::size_t landmark_step = 0;
};

inline std::vector<std::string> synth_landmark(Rng& rng) {
  static const std::vector<std::vector<std::string>> landmarks{
      {"lamp"},          {"bench"},          {"fountain"},      {"black", "easel"},
      {"coat", "rack"},  {"red", "chair"},   {"blue", "door"},  {"wooden", "sofa"},
      {"large", "window"}, {"corner"},       {"small", "table"}, {"wall"}};
  std::vector<std::string> out{"the"};
  const auto& lm = landmarks[rng.below(landmarks.size())];
  out.insert(out.end(), lm.begin(), lm.end());
  return out;
}

inline Clause synth_clause(Rng& rng) {
  Clause c;
  auto with_landmark = [&](std::vector<std::string> prefix, Action a) {
    const auto lm = synth_landmark(rng);
    c.words = std::move(prefix);
    const std::size_t begin = c.words.size();
    c.words.insert(c.words.end(), lm.begin(), lm.end());
    c.landmark = std::make_pair(begin, c.words.size());
    c.actions = {a};
    c.landmark_step = 0;
  };
  switch (rng.below(11)) {
    case 0:
      c.words = {"walk", "forward"};
      c.actions = {Action::Forward};
      break;
    case 1: {
      const bool three = rng.below(2) == 1;
      c.words = {"walk", "forward", three ? "three" : "two", "steps"};
      c.actions.assign(three ? 3 : 2, Action::Forward);
      break;
    }
    case 2:
      with_landmark({"walk", "toward"}, Action::Forward);
      break;
    case 3:
      c.words = {"turn", "left"};
      c.actions = {Action::Left};
      break;
    case 4:
      c.words = {"turn", "right"};
      c.actions = {Action::Right};
      break;
    case 5: {
      const bool left = rng.below(2) == 0;
      with_landmark({"turn", left ? "left" : "right", "at"}, left ? Action::Left : Action::Right);
      break;
    }
    case 6:
      c.words = {"go", "up", "the", "stairs"};
      c.actions = {Action::Ascend};
      c.landmark = std::make_pair(std::size_t{2}, std::size_t{4});
      break;
    case 7:
      c.words = {"go", "down", "the", "stairs"};
      c.actions = {Action::Descend};
      c.landmark = std::make_pair(std::size_t{2}, std::size_t{4});
      break;
    case 8:
      with_landmark({"you", "will", "see"}, Action::Stand);
      break;
    case 9:
      with_landmark({"pass"}, Action::Forward);
      break;
    default:
      if (rng.below(2) == 0) {
        c.words = {"make", "a", "turn"};
        c.actions = {Action::Turn};
      } else {
        c.words = {"keep", "moving"};
        c.actions = {Action::Move};
      }
      break;
  }
  return c;
}

inline Instruction synth_sentence(Rng& rng, const std::string& route_id, int sentence_id,
                                  int max_clauses) {
  const std::size_t n_clauses = 1 + rng.below(static_cast<std::size_t>(std::max(1, max_clauses)));
  std::vector<std::string> words;
  ActionSeq actions;
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> marks;  // (step, token ids)
  for (std::size_t k = 0; k < n_clauses; ++k) {
    if (k > 0) {
      static const std::vector<std::vector<std::string>> joiners{{"then"}, {"and"}, {",", "then"}};
      const auto& j = joiners[rng.below(joiners.size())];
      words.insert(words.end(), j.begin(), j.end());
    }
    const Clause c = synth_clause(rng);
    const std::size_t offset = words.size();
    words.insert(words.end(), c.words.begin(), c.words.end());
    if (c.landmark) {
      std::vector<std::size_t> ids;
      for (std::size_t i = c.landmark->first; i < c.landmark->second; ++i) ids.push_back(offset + i);
      marks.emplace_back(actions.size() + c.landmark_step, std::move(ids));
    }
    actions.insert(actions.end(), c.actions.begin(), c.actions.end());
  }
  words.push_back(".");
  words.front()[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(words.front()[0])));
  actions.push_back(Action::Stop);

  Instruction ins;
  ins.route_id = route_id;
  ins.sentence_id = sentence_id;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const bool glue = words[i] == "," || words[i] == ".";
    if (i > 0 && !glue) ins.raw_text += ' ';
    ins.raw_text += words[i];
  }
  ins.tokens = tokenize(ins.raw_text);
  ins.sentence_boundaries = sentence_starts(ins.tokens);
  StateSeq states(actions.size(), StateVector(ins.tokens.size(), 0));
  for (const auto& [step, ids] : marks) {
    for (std::size_t i : ids) states[step][i] = 1;
  }
  ins.gold_actions = std::move(actions);
  ins.gold_states = std::move(states);
  return ins;
}

}  // namespace detail

/// Templated route instructions with exactly known actions and landmark
/// states. Deterministic in `seed`.
inline Corpus generate_synthetic(std::size_t n_routes, std::uint64_t seed, const SynthOptions& opts = {}) {
  if (n_routes == 0) throw ValidationError("generate_synthetic needs at least one route");
  if (opts.min_sentences < 1 || opts.max_sentences < opts.min_sentences) {
    throw ValidationError("invalid sentences-per-route range");
  }
  Rng rng(seed);
  Corpus corpus;
  for (std::size_t r = 0; r < n_routes; ++r) {
    std::ostringstream id;
    id << "synth-" << std::setw(4) << std::setfill('0') << r;
    const auto span = static_cast<std::size_t>(opts.max_sentences - opts.min_sentences + 1);
    const int n_sent = opts.min_sentences + static_cast<int>(rng.below(span));
    for (int s = 0; s < n_sent; ++s) {
      corpus.instructions.push_back(detail::synth_sentence(rng, id.str(), s, opts.max_clauses));
    }
  }
  return corpus;
}

}  // namespace lmg
