#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lmg/model/network.hpp"

namespace lmg {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that gradients which are
  /// zero up to rounding are compared absolutely.
  double floor = 1e-5;
  std::uint64_t seed = 3;
  /// Deliberately breaks one op's backward rule (negative control).
  std::optional<std::string> fault_op;
  double fault_scale = 1.5;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Three-token annotated sentence used by the gradient check.
inline Instruction gradcheck_instruction() {
  Instruction ins;
  ins.route_id = "gradcheck";
  ins.raw_text = "Pass the lamp";
  ins.tokens = tokenize(ins.raw_text);
  ins.sentence_boundaries = sentence_starts(ins.tokens);
  ins.gold_actions = ActionSeq{Action::Forward, Action::Left, Action::Stop};
  ins.gold_states = StateSeq{{0, 1, 1}, {0, 0, 1}, {0, 0, 0}};
  return ins;
}

/// Compares analytic gradients of the joint loss against central finite
/// differences for every scalar of every parameter of `model`. Dropout is
/// active with a fixed mask stream, so the loss is a deterministic function.
inline GradCheckReport gradient_check(LandmarkModel& model, const Instruction& ins, const Vocabulary& vocab,
                                      const GradCheckOptions& opts = {}) {
  const std::uint64_t dropout_seed = opts.seed ^ 0xd20bULL;
  auto loss_value = [&]() {
    nn::Tape tape(true);
    const auto bound = model.bind(tape);
    Rng rng(dropout_seed);
    return model.joint_loss(tape, bound, ins, vocab, true, rng).total.value().item();
  };

  model.params().zero_grad();
  {
    nn::Tape tape(true);
    if (opts.fault_op) tape.set_backward_fault(*opts.fault_op, opts.fault_scale);
    const auto bound = model.bind(tape);
    Rng rng(dropout_seed);
    tape.backward(model.joint_loss(tape, bound, ins, vocab, true, rng).total);
  }

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  for (auto& e : model.params().entries()) {
    GradCheckEntry entry;
    entry.name = e.name;
    entry.count = e.value.size();
    const auto analytic = e.value.grad();
    auto& w = e.value.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + opts.epsilon;
      const double up = loss_value();
      w[i] = orig - opts.epsilon;
      const double down = loss_value();
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic[i] - numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], numeric, opts.floor));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  return report;
}

/// Gradient check on a freshly initialized width-4 model and the fixed
/// three-token sentence.
inline GradCheckReport gradient_check_width4(const GradCheckOptions& opts = {}) {
  LandmarkModel model(ModelConfig::width4(), opts.seed);
  const auto ins = gradcheck_instruction();
  Corpus c;
  c.instructions.push_back(ins);
  const auto vocab = with_random_embeddings(build_vocabulary(c, model.config().word_embed_dim), opts.seed);
  return gradient_check(model, ins, vocab, opts);
}

}  // namespace lmg
