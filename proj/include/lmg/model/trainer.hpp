#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "lmg/model/network.hpp"
#include "lmg/numerics/optim.hpp"

namespace lmg {

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_action_loss = 0.0;
  double mean_state_loss = 0.0;
  std::int64_t step = 0;  // optimizer steps taken so far
  double last_lr = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 1;
  /// Overrides config().epochs when set.
  std::optional<int> epochs;
  std::function<void(const EpochStats&, const LandmarkModel&)> on_epoch;
};

/// Batch-size-1 training on the joint loss with Adam and exponential decay.
/// Sentence order is reshuffled every epoch from `opts.seed`.
inline std::vector<EpochStats> train(LandmarkModel& model, const std::vector<Instruction>& data,
                                     const Vocabulary& vocab, const TrainOptions& opts = {}) {
  if (data.empty()) throw ValidationError("training set is empty");
  for (const auto& ins : data) {
    if (!ins.has_gold()) {
      throw ValidationError(record_label(ins) + ": training needs gold actions and states");
    }
  }
  const auto& cfg = model.config();
  const int epochs = opts.epochs.value_or(cfg.epochs);
  const nn::ExponentialDecay schedule{cfg.lr_initial, cfg.lr_decay_rate, cfg.lr_decay_steps};
  Rng order_rng(opts.seed ^ 0x5eed0fde11aULL);
  Rng dropout_rng(opts.seed ^ 0xd20b0a7ULL);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochStats> log;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t idx : order) {
      const auto& ins = data[idx];
      model.params().zero_grad();
      nn::Tape tape(true);
      const auto bound = model.bind(tape);
      const auto loss = model.joint_loss(tape, bound, ins, vocab, true, dropout_rng);
      const double value = loss.total.value().item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " on " + record_label(ins) +
                              " (action " + std::to_string(loss.action.value().item()) + ", state " +
                              std::to_string(loss.state.value().item()) + ")");
      }
      tape.backward(loss.total);
      stats.last_lr = schedule(model.params().step());
      nn::adam_step(model.params(), stats.last_lr);
      stats.mean_loss += value;
      stats.mean_action_loss += loss.action.value().item();
      stats.mean_state_loss += loss.state.value().item();
    }
    const auto n = static_cast<double>(data.size());
    stats.mean_loss /= n;
    stats.mean_action_loss /= n;
    stats.mean_state_loss /= n;
    stats.step = model.params().step();
    log.push_back(stats);
    if (opts.on_epoch) opts.on_epoch(stats, model);
  }
  return log;
}

}  // namespace lmg
