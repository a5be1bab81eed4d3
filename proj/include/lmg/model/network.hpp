#pragma once

#include <cctype>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lmg/corpus.hpp"
#include "lmg/model/config.hpp"
#include "lmg/model/crf.hpp"
#include "lmg/numerics/optim.hpp"
#include "lmg/numerics/tape.hpp"

namespace lmg {

enum class AttentionHead { Action, State };

/// Half-open token range [start, end).
using TokenRange = std::pair<std::size_t, std::size_t>;

/// Maximal runs of consecutive 1-bits.
inline std::vector<TokenRange> group_spans(const StateVector& bits) {
  std::vector<TokenRange> spans;
  std::size_t i = 0;
  while (i < bits.size()) {
    if (!bits[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bits.size() && bits[j]) ++j;
    spans.emplace_back(i, j);
    i = j;
  }
  return spans;
}

struct Prediction {
  ActionSeq actions;
  StateSeq states;
  std::vector<std::vector<TokenRange>> spans;  // per kept step
  bool truncated = false;                      // no STOP within max_decode_len
};

/// Per-token tensors produced by the encoder, all with one row per token.
struct EncoderOutput {
  nn::Var words;     // [n, E]     frozen embeddings w_i
  nn::Var encoded;   // [n, 2H]    e_i = [e_fw_i, e_bw_i]
  nn::Var features;  // [n, phi]   explicit features phi_i
  nn::Var context;   // [n, E+2H+phi]  [w_i, e_i, phi_i]
  nn::Var keys_in;   // [n, 2H+phi]    [e_i, phi_i]
  std::size_t length = 0;
};

struct AttentionOutput {
  nn::Var scores;   // beta row [n]
  nn::Var weights;  // alpha row [n]
  nn::Var context;  // z [E+2H+phi]
};

struct DecodeOutput {
  nn::Var emissions;     // mu [T, 9]
  nn::Var state_scores;  // beta_s [T, n]
};

struct LossParts {
  nn::Var total;
  nn::Var action;
  nn::Var state;
};

/// Token-level explicit features phi.
inline std::vector<double> word_features(const Instruction& ins, std::size_t i) {
  std::vector<double> phi(kPhiDim, 0.0);
  const auto& text = ins.tokens[i].text;
  const auto first = static_cast<unsigned char>(text[0]);
  phi[0] = first < 128 && std::isupper(first) ? 1.0 : 0.0;
  phi[1] = std::all_of(text.begin(), text.end(), [](unsigned char c) { return c < 128 && std::isdigit(c); }) ? 1.0 : 0.0;
  phi[2] = i == 0 ? 1.0 : 0.0;
  phi[3] = i + 1 == ins.tokens.size() ? 1.0 : 0.0;
  if (const auto& tag = ins.tokens[i].pos_tag) {
    if (auto k = pos_tag_index(*tag)) phi[kBasicWordFeatures + *k] = 1.0;
  }
  return phi;
}

/// [L, kCharChannels] character matrix for one word.
inline nn::Tensor char_matrix(const std::string& word) {
  nn::Tensor m(nn::Shape{word.size(), kCharChannels});
  for (std::size_t j = 0; j < word.size(); ++j) {
    const auto c = static_cast<unsigned char>(word[j]);
    m.at(j, char_id(c)) = 1.0;
    if (c < 128) {
      m.at(j, kCharVocabSize + 0) = std::isdigit(c) ? 1.0 : 0.0;
      m.at(j, kCharVocabSize + 1) = std::isalpha(c) ? 1.0 : 0.0;
      m.at(j, kCharVocabSize + 2) = std::isupper(c) ? 1.0 : 0.0;
      m.at(j, kCharVocabSize + 3) = std::ispunct(c) ? 1.0 : 0.0;
    }
  }
  return m;
}

/// The joint action/state network: char-CNN + embedding encoder, bi-LSTM,
/// separate action and state attention, LSTM decoder, CRF action layer and a
/// per-token state score.
class LandmarkModel {
public:
  /// Parameter handles on one tape.
  class Bound {
  public:
    nn::Var operator[](const std::string& name) const {
      auto it = vars_.find(name);
      if (it == vars_.end()) throw Error("parameter '" + name + "' not bound");
      return it->second;
    }

  private:
    friend class LandmarkModel;
    std::map<std::string, nn::Var> vars_;
  };

  LandmarkModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    register_params();
    initialize(seed);
  }

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Binds every parameter onto `tape`: as gradient-receiving leaves when
  /// the tape records gradients, as read-only constants otherwise.
  Bound bind(nn::Tape& tape) {
    Bound b;
    for (auto& e : params_.entries()) {
      b.vars_[e.name] = tape.grad_enabled() ? tape.param(e.value) : tape.constant_ref(e.value);
    }
    return b;
  }

  Bound bind(nn::Tape& tape) const {
    if (tape.grad_enabled()) throw Error("a const model can only be bound to a gradient-free tape");
    Bound b;
    for (const auto& e : params_.entries()) b.vars_[e.name] = tape.constant_ref(e.value);
    return b;
  }

  EncoderOutput encode(nn::Tape& tape, const Bound& p, const Instruction& ins, const Vocabulary& vocab,
                       bool training, Rng& rng) const {
    const std::size_t n = ins.tokens.size();
    if (n == 0) throw ValidationError(record_label(ins) + ": cannot encode an empty instruction");
    if (vocab.dim() != config_.word_embed_dim) {
      throw ShapeError("vocabulary embedding dimension " + std::to_string(vocab.dim()) +
                       " does not match config word_embed_dim " + std::to_string(config_.word_embed_dim));
    }
    const std::size_t E = config_.word_embed_dim, H = config_.encoder_hidden;

    std::vector<double> word_rows;
    std::vector<double> phi_rows;
    std::vector<nn::Var> inputs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& text = ins.tokens[i].text;
      const auto chars = tape.constant(char_matrix(text));
      std::vector<nn::Var> pooled;
      for (auto w : config_.char_filter_sizes) {
        const auto key = "char.conv" + std::to_string(w);
        pooled.push_back(nn::conv1d_maxpool(chars, p[key + ".W"], p[key + ".b"], w));
      }
      const auto char_feat = nn::tanh(nn::concat(pooled));
      const auto emb = vocab.embedding(vocab.id(text));
      word_rows.insert(word_rows.end(), emb.begin(), emb.end());
      const auto word = tape.constant(nn::Tensor::vector({emb.begin(), emb.end()}));
      inputs.push_back(nn::dropout(nn::concat({char_feat, word}), config_.dropout_in, training, rng));
      const auto phi = word_features(ins, i);
      phi_rows.insert(phi_rows.end(), phi.begin(), phi.end());
    }

    auto run = [&](const std::string& dir, bool reverse) {
      std::vector<nn::Var> out(n);
      auto h = tape.constant(nn::Tensor(nn::Shape{H}));
      auto c = tape.constant(nn::Tensor(nn::Shape{H}));
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = reverse ? n - 1 - k : k;
        const auto hc = nn::lstm_cell(inputs[i], h, c, p["enc." + dir + ".W"], p["enc." + dir + ".b"]);
        h = nn::slice(hc, 0, H);
        c = nn::slice(hc, H, H);
        out[i] = h;
      }
      return out;
    };
    const auto fw = run("fw", false);
    const auto bw = run("bw", true);
    std::vector<nn::Var> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back(nn::dropout(nn::concat({fw[i], bw[i]}), config_.dropout_out, training, rng));
    }

    EncoderOutput out;
    out.length = n;
    out.words = tape.constant(nn::Tensor::matrix(n, E, std::move(word_rows)));
    out.encoded = nn::stack_rows(rows);
    out.features = tape.constant(nn::Tensor::matrix(n, kPhiDim, std::move(phi_rows)));
    out.context = nn::concat_cols({out.words, out.encoded, out.features});
    out.keys_in = nn::concat_cols({out.encoded, out.features});
    return out;
  }

  /// U w_i + V [e_i, phi_i] for every token: the decoder-independent part of
  /// the attention score, [n, A].
  nn::Var attention_keys(const Bound& p, const EncoderOutput& enc, AttentionHead head) const {
    const auto pre = head_prefix(head);
    return nn::add(nn::matmul_bt(enc.words, p[pre + ".U"]), nn::matmul_bt(enc.keys_in, p[pre + ".V"]));
  }

  /// beta_ti = v . tanh(W d_{t-1} + U w_i + V [e_i, phi_i]); alpha = softmax(beta);
  /// z = sum_i alpha_i [w_i, e_i, phi_i].
  AttentionOutput attend(const Bound& p, const EncoderOutput& enc, nn::Var keys, nn::Var d_prev,
                         AttentionHead head) const {
    const auto pre = head_prefix(head);
    const auto query = nn::matvec(p[pre + ".W"], d_prev);
    const auto hidden = nn::tanh(nn::add_row(keys, query));
    AttentionOutput out;
    out.scores = nn::matvec(hidden, p[pre + ".v"]);
    out.weights = nn::softmax_rows(out.scores);
    out.context = nn::matvec_t(enc.context, out.weights);
    return out;
  }

  /// Unrolls the decoder for `steps` steps from a zero state. The decoder
  /// consumes only attention contexts, so the unroll is action-independent.
  DecodeOutput decode_unroll(nn::Tape& tape, const Bound& p, const EncoderOutput& enc, std::size_t steps) const {
    if (steps == 0) throw ValidationError("decode_unroll needs at least one step");
    const std::size_t D = config_.decoder_hidden;
    const auto keys_a = attention_keys(p, enc, AttentionHead::Action);
    const auto keys_s = attention_keys(p, enc, AttentionHead::State);
    auto d = tape.constant(nn::Tensor(nn::Shape{D}));
    auto c = tape.constant(nn::Tensor(nn::Shape{D}));
    std::vector<nn::Var> mu_rows, beta_rows;
    for (std::size_t t = 0; t < steps; ++t) {
      const auto act = attend(p, enc, keys_a, d, AttentionHead::Action);
      const auto st = attend(p, enc, keys_s, d, AttentionHead::State);
      beta_rows.push_back(st.scores);
      const auto hc = nn::lstm_cell(nn::concat({act.context, st.context}), d, c, p["dec.W"], p["dec.b"]);
      d = nn::slice(hc, 0, D);
      c = nn::slice(hc, D, D);
      mu_rows.push_back(nn::add(nn::matvec(p["crf.unary.W"], d), p["crf.unary.b"]));
    }
    return DecodeOutput{nn::stack_rows(mu_rows), nn::stack_rows(beta_rows)};
  }

  /// Action NLL plus state sigmoid cross-entropy for one annotated instruction.
  LossParts joint_loss(nn::Tape& tape, const Bound& p, const Instruction& ins, const Vocabulary& vocab,
                       bool training, Rng& rng) const {
    if (!ins.has_gold()) throw ValidationError(record_label(ins) + ": training needs gold actions and states");
    const auto& gold = *ins.gold_actions;
    const auto enc = encode(tape, p, ins, vocab, training, rng);
    // Rows beyond the gold length are unsupervised, so only T steps are needed.
    const auto dec = decode_unroll(tape, p, enc, gold.size());
    LossParts parts;
    parts.action = crf::nll(dec.emissions, p["crf.theta"], gold);
    parts.state = state_loss(dec.state_scores, *ins.gold_states);
    parts.total = nn::add(parts.action, parts.state);
    return parts;
  }

  Prediction predict(const Instruction& ins, const Vocabulary& vocab) const {
    nn::Tape tape(false);
    const auto p = bind(tape);
    Rng unused(0);
    const auto enc = encode(tape, p, ins, vocab, false, unused);
    const auto dec = decode_unroll(tape, p, enc, config_.max_decode_len);
    return decode_prediction(dec.emissions.value(), p["crf.theta"].value(), dec.state_scores.value());
  }

  /// Viterbi over the full lattice, cut after the first STOP; a token is a
  /// landmark at step t iff its state score is positive.
  static Prediction decode_prediction(const nn::Tensor& emissions, const nn::Tensor& theta,
                                      const nn::Tensor& state_scores) {
    const crf::Lattice lat{emissions.values(), emissions.rows(), theta.values()};
    const auto best = crf::viterbi(lat);
    Prediction pred;
    pred.truncated = true;
    for (std::size_t t = 0; t < best.path.size(); ++t) {
      const Action a = action_from_index(best.path[t]);
      pred.actions.push_back(a);
      StateVector bits(state_scores.cols(), 0);
      for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = state_scores.at(t, i) > 0.0 ? 1 : 0;
      pred.spans.push_back(group_spans(bits));
      pred.states.push_back(std::move(bits));
      if (a == Action::Stop) {
        pred.truncated = false;
        break;
      }
    }
    return pred;
  }

  /// Sum over gold steps and tokens of max(b,0) - b*s + log(1 + exp(-|b|)).
  static nn::Var state_loss(nn::Var scores, const StateSeq& gold) {
    const auto& sv = scores.value();
    if (sv.rank() != 2 || gold.size() > sv.rows()) {
      throw ShapeError("state_loss: " + std::to_string(gold.size()) + " gold steps for score matrix " +
                       nn::shape_str(sv.shape()));
    }
    const std::size_t n = sv.cols();
    double loss = 0.0;
    for (std::size_t t = 0; t < gold.size(); ++t) {
      if (gold[t].size() != n) {
        throw ShapeError("state_loss: gold state " + std::to_string(t) + " has length " +
                         std::to_string(gold[t].size()) + ", scores have " + std::to_string(n) + " columns");
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double b = sv.at(t, i);
        loss += std::max(b, 0.0) - b * gold[t][i] + std::log1p(std::exp(-std::abs(b)));
      }
    }
    return scores.tape->record("state_loss", nn::Tensor::scalar(loss),
                               [scores, gold, n](nn::Tape& t, const std::vector<double>& g) {
                                 const auto& v = scores.value();
                                 auto& sg = t.grad(scores.id);
                                 for (std::size_t s = 0; s < gold.size(); ++s) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                     sg[s * n + i] += g[0] * (nn::sigmoid_scalar(v.at(s, i)) - gold[s][i]);
                                   }
                                 }
                               });
  }

private:
  static std::string head_prefix(AttentionHead head) {
    return head == AttentionHead::Action ? "att.action" : "att.state";
  }

  void register_params() {
    const auto& c = config_;
    const std::size_t per = c.filters_per_size();
    for (auto w : c.char_filter_sizes) {
      const auto key = "char.conv" + std::to_string(w);
      params_.add(key + ".W", nn::Tensor(nn::Shape{per, w * kCharChannels}));
      params_.add(key + ".b", nn::Tensor(nn::Shape{per}));
    }
    const std::size_t X = c.encoder_input_dim(), H = c.encoder_hidden;
    for (const char* dir : {"fw", "bw"}) {
      params_.add(std::string("enc.") + dir + ".W", nn::Tensor(nn::Shape{4 * H, X + H}));
      params_.add(std::string("enc.") + dir + ".b", nn::Tensor(nn::Shape{4 * H}));
    }
    const std::size_t A = c.attention_dim, D = c.decoder_hidden;
    for (auto head : {AttentionHead::Action, AttentionHead::State}) {
      const auto pre = head_prefix(head);
      params_.add(pre + ".W", nn::Tensor(nn::Shape{A, D}));
      params_.add(pre + ".U", nn::Tensor(nn::Shape{A, c.word_embed_dim}));
      params_.add(pre + ".V", nn::Tensor(nn::Shape{A, c.key_dim()}));
      params_.add(pre + ".v", nn::Tensor(nn::Shape{A}));
    }
    params_.add("dec.W", nn::Tensor(nn::Shape{4 * D, 2 * c.context_dim() + D}));
    params_.add("dec.b", nn::Tensor(nn::Shape{4 * D}));
    params_.add("crf.unary.W", nn::Tensor(nn::Shape{kNumActions, D}));
    params_.add("crf.unary.b", nn::Tensor(nn::Shape{kNumActions}));
    params_.add("crf.theta", nn::Tensor(nn::Shape{kNumActions, kNumActions}));
  }

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& e : params_.entries()) {
      for (auto& x : e.value.values()) x = rng.uniform(-config_.init_scale, config_.init_scale);
    }
    auto forget_bias = [&](const std::string& name, std::size_t hidden) {
      auto& b = params_.at(name).values();
      for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    };
    forget_bias("enc.fw.b", config_.encoder_hidden);
    forget_bias("enc.bw.b", config_.encoder_hidden);
    forget_bias("dec.b", config_.decoder_hidden);
  }

  ModelConfig config_;
  nn::ParamStore params_;
};

}  // namespace lmg
