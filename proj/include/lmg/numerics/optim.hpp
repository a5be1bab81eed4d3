#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmg/error.hpp"
#include "lmg/numerics/tensor.hpp"

namespace lmg::nn {

/// Named trainable tensors in registration order, plus Adam moment buffers.
class ParamStore {
public:
  struct Entry {
    std::string name;
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
  };

  Tensor& add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
    index_[name] = entries_.size();
    const std::size_t n = value.size();
    entries_.push_back(Entry{name, std::move(value), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return entries_[it->second].value;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return entries_[it->second].value;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) {
    if (s < 0) throw Error("step counter must be non-negative");
    step_ = s;
  }

  void zero_grad() {
    for (auto& e : entries_) e.value.zero_grad();
  }

private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update over every parameter. Gradients are read, not cleared.
inline void adam_step(ParamStore& params, double lr, const AdamOptions& opt = {}) {
  for (const auto& e : params.entries()) {
    for (double g : e.value.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + e.name + "'");
    }
  }
  params.set_step(params.step() + 1);
  const double t = static_cast<double>(params.step());
  const double bias1 = 1.0 - std::pow(opt.beta1, t);
  const double bias2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& e : params.entries()) {
    auto& w = e.value.values();
    const auto& g = e.value.grad();
    if (g.empty()) continue;
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.m[i] = opt.beta1 * e.m[i] + (1.0 - opt.beta1) * g[i];
      e.v[i] = opt.beta2 * e.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = e.m[i] / bias1;
      const double v_hat = e.v[i] / bias2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

/// Continuous exponential decay: initial * rate^(step / decay_steps).
struct ExponentialDecay {
  double initial = 0.001;
  double rate = 0.99;
  double decay_steps = 1000.0;

  double operator()(std::int64_t step) const {
    if (step < 0) throw Error("learning-rate step must be non-negative");
    return initial * std::pow(rate, static_cast<double>(step) / decay_steps);
  }
};

inline double lr_at(std::int64_t step) { return ExponentialDecay{}(step); }

}  // namespace lmg::nn
