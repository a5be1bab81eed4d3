#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lmg/action.hpp"
#include "lmg/error.hpp"
#include "lmg/numerics/tape.hpp"

namespace lmg::crf {

inline constexpr std::size_t K = kNumActions;

inline double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Emission scores for T steps, row-major [T, 9].
struct Lattice {
  std::span<const double> unary;
  std::size_t steps;
  std::span<const double> transition;  // [9, 9], from-row to-column

  double mu(std::size_t t, std::size_t y) const { return unary[t * K + y]; }
  double theta(std::size_t from, std::size_t to) const { return transition[from * K + to]; }
};

inline void check_lattice(const Lattice& l) {
  if (l.unary.size() < l.steps * K) throw ShapeError("crf: emission matrix has fewer than T rows");
  if (l.transition.size() != K * K) throw ShapeError("crf: transition matrix must be 9x9");
}

/// Unnormalized log score of a label path.
inline double path_score(const Lattice& l, std::span<const std::size_t> path) {
  double s = l.mu(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) s = s + l.theta(path[t - 1], path[t]) + l.mu(t, path[t]);
  return s;
}

/// Forward log-potentials alpha[t][y]: log-sum over all prefixes ending in y at t.
inline std::vector<double> forward_scores(const Lattice& l) {
  std::vector<double> alpha(l.steps * K);
  std::array<double, K> tmp{};
  for (std::size_t y = 0; y < K; ++y) alpha[y] = l.mu(0, y);
  for (std::size_t t = 1; t < l.steps; ++t) {
    for (std::size_t y = 0; y < K; ++y) {
      for (std::size_t p = 0; p < K; ++p) tmp[p] = alpha[(t - 1) * K + p] + l.theta(p, y);
      alpha[t * K + y] = log_sum_exp(tmp) + l.mu(t, y);
    }
  }
  return alpha;
}

/// Backward log-potentials beta[t][y]: log-sum over all suffixes after y at t.
inline std::vector<double> backward_scores(const Lattice& l) {
  std::vector<double> beta(l.steps * K, 0.0);
  std::array<double, K> tmp{};
  for (std::size_t t = l.steps - 1; t-- > 0;) {
    for (std::size_t y = 0; y < K; ++y) {
      for (std::size_t n = 0; n < K; ++n) tmp[n] = l.theta(y, n) + l.mu(t + 1, n) + beta[(t + 1) * K + n];
      beta[t * K + y] = log_sum_exp(tmp);
    }
  }
  return beta;
}

/// log zeta: log of the summed exponentiated scores of all 9^T paths.
inline double log_partition(const Lattice& l) {
  check_lattice(l);
  if (l.steps == 0) throw ValidationError("crf: empty lattice");
  const auto alpha = forward_scores(l);
  return log_sum_exp(std::span<const double>(alpha).subspan((l.steps - 1) * K, K));
}

struct ViterbiResult {
  std::vector<std::size_t> path;
  double score = 0.0;
};

/// Highest-scoring path. Ties go to the lower label index at every choice.
inline ViterbiResult viterbi(const Lattice& l) {
  check_lattice(l);
  if (l.steps == 0) throw ValidationError("crf: empty lattice");
  std::vector<double> delta(l.steps * K);
  std::vector<std::size_t> back(l.steps * K, 0);
  for (std::size_t y = 0; y < K; ++y) delta[y] = l.mu(0, y);
  for (std::size_t t = 1; t < l.steps; ++t) {
    for (std::size_t y = 0; y < K; ++y) {
      std::size_t best = 0;
      double best_score = delta[(t - 1) * K] + l.theta(0, y);
      for (std::size_t p = 1; p < K; ++p) {
        const double s = delta[(t - 1) * K + p] + l.theta(p, y);
        if (s > best_score) {
          best_score = s;
          best = p;
        }
      }
      delta[t * K + y] = best_score + l.mu(t, y);
      back[t * K + y] = best;
    }
  }
  ViterbiResult r;
  const std::size_t last = (l.steps - 1) * K;
  std::size_t y = 0;
  for (std::size_t c = 1; c < K; ++c) {
    if (delta[last + c] > delta[last + y]) y = c;
  }
  r.score = delta[last + y];
  r.path.assign(l.steps, 0);
  for (std::size_t t = l.steps; t-- > 0;) {
    r.path[t] = y;
    y = back[t * K + y];
  }
  return r;
}

/// -log P(gold | mu, theta) over the first |gold| rows of `mu` ([R, 9]).
inline nn::Var nll(nn::Var mu, nn::Var theta, const ActionSeq& gold) {
  if (gold.empty()) throw ValidationError("crf_nll: empty gold sequence");
  const auto& mv = mu.value();
  if (mv.rank() != 2 || mv.cols() != K || theta.value().size() != K * K) {
    throw ShapeError("crf_nll: expected [T,9] emissions and a 9x9 transition matrix, got " +
                     nn::shape_str(mv.shape()) + " and " + nn::shape_str(theta.shape()));
  }
  if (gold.size() > mv.rows()) {
    throw ShapeError("crf_nll: gold length " + std::to_string(gold.size()) + " exceeds " +
                     std::to_string(mv.rows()) + " emission rows");
  }
  std::vector<std::size_t> path(gold.size());
  for (std::size_t t = 0; t < gold.size(); ++t) path[t] = index_of(gold[t]);
  const Lattice lat{mv.values(), gold.size(), theta.value().values()};
  const double log_z = log_partition(lat);
  // log zeta >= path score exactly; clamp rounding so exp(-loss) <= 1.
  const double loss = std::max(0.0, log_z - path_score(lat, path));
  return mu.tape->record(
      "crf_nll", nn::Tensor::scalar(loss), [mu, theta, path, log_z](nn::Tape& t, const std::vector<double>& g) {
        const Lattice l{mu.value().values(), path.size(), theta.value().values()};
        const auto alpha = forward_scores(l);
        const auto beta = backward_scores(l);
        auto& gm = t.grad(mu.id);
        auto& gt = t.grad(theta.id);
        const double go = g[0];
        for (std::size_t s = 0; s < l.steps; ++s) {
          for (std::size_t y = 0; y < K; ++y) {
            gm[s * K + y] += go * std::exp(alpha[s * K + y] + beta[s * K + y] - log_z);
          }
          gm[s * K + path[s]] -= go;
          if (s + 1 < l.steps) {
            for (std::size_t i = 0; i < K; ++i) {
              for (std::size_t j = 0; j < K; ++j) {
                gt[i * K + j] += go * std::exp(alpha[s * K + i] + l.theta(i, j) + l.mu(s + 1, j) +
                                               beta[(s + 1) * K + j] - log_z);
              }
            }
            gt[path[s] * K + path[s + 1]] -= go;
          }
        }
      });
}

}  // namespace lmg::crf
