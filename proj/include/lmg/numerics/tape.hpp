#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lmg/numerics/tensor.hpp"
#include "lmg/rng.hpp"

namespace lmg::nn {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so
/// replaying them backwards visits each op after all of its consumers.
class Tape {
public:
  /// Receives the gradient of the node's output and adds into its parents'.
  using BackwardFn = std::function<void(Tape&, const std::vector<double>& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.owned = std::move(value);
    return push(std::move(n));
  }

  /// Leaf bound to a trainable tensor. The tensor must outlive the tape;
  /// backward() adds into its gradient.
  Var param(Tensor& p) {
    Node n;
    n.op = "param";
    n.ref = &p;
    n.param = &p;
    return push(std::move(n));
  }

  /// Leaf referencing an external tensor that never receives gradient.
  Var constant_ref(const Tensor& t) {
    Node n;
    n.op = "constant";
    n.ref = &t;
    return push(std::move(n));
  }

  Var record(std::string op, Tensor value, BackwardFn fn) {
    Node n;
    n.op = std::move(op);
    n.owned = std::move(value);
    if (grad_enabled_) n.backward = std::move(fn);
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : *n.owned;
  }

  /// Gradient buffer of a node, allocated on first use.
  std::vector<double>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).size()) n.grad.assign(value(id).size(), 0.0);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Test hook: multiplies the gradient flowing into every `op` node's
  /// backward rule by `scale`, breaking that rule on purpose.
  void set_backward_fault(std::string op, double scale) { faults_[std::move(op)] = scale; }

  void backward(Var loss) {
    if (!grad_enabled_) throw Error("backward() called on a tape with gradients disabled");
    if (loss.tape != this) throw Error("backward() loss belongs to a different tape");
    if (value(loss.id).size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(value(loss.id).shape()));
    }
    for (auto& n : nodes_) n.grad.clear();
    grad(loss.id)[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (n.grad.empty()) continue;
      if (n.param) {
        auto& g = n.param->grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      }
      if (n.backward) {
        if (auto f = faults_.find(n.op); f != faults_.end()) {
          std::vector<double> scaled = n.grad;
          for (auto& x : scaled) x *= f->second;
          n.backward(*this, scaled);
        } else {
          n.backward(*this, n.grad);
        }
      }
    }
  }

private:
  struct Node {
    std::string op;
    std::optional<Tensor> owned;
    const Tensor* ref = nullptr;
    Tensor* param = nullptr;
    BackwardFn backward;
    std::vector<double> grad;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::map<std::string, double> faults_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Eigen views
// ---------------------------------------------------------------------------

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

inline CMatMap as_mat(const Tensor& t) {
  return CMatMap(t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline CVecMap as_vec(const Tensor& t) {
  return CVecMap(t.values().data(), static_cast<Eigen::Index>(t.size()));
}
inline MatMap as_mat(std::vector<double>& g, std::size_t rows, std::size_t cols) {
  return MatMap(g.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline VecMap as_vec(std::vector<double>& g) {
  return VecMap(g.data(), static_cast<Eigen::Index>(g.size()));
}
inline CVecMap as_vec(const std::vector<double>& g) {
  return CVecMap(g.data(), static_cast<Eigen::Index>(g.size()));
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_tape(std::initializer_list<Var> vars) {
  const Tape* t = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape != t || t == nullptr) throw Error("operands recorded on different tapes");
  }
}

[[noreturn]] inline void shape_fail(const std::string& op, std::initializer_list<Shape> shapes) {
  std::string msg = op + ": incompatible shapes";
  for (const auto& s : shapes) msg += " " + shape_str(s);
  throw ShapeError(msg);
}

}  // namespace detail

/// [m,k] x [k,n] -> [m,n]
inline Var matmul(Var a, Var b) {
  detail::check_same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    detail::shape_fail("matmul", {av.shape(), bv.shape()});
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor y(Shape{m, n});
  as_mat(y.values(), m, n).noalias() = as_mat(av) * as_mat(bv);
  return a.tape->record("matmul", std::move(y), [a, b, m, k, n](Tape& t, const std::vector<double>& g) {
    const auto G = CMatMap(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    as_mat(t.grad(a.id), m, k).noalias() += G * as_mat(b.value()).transpose();
    as_mat(t.grad(b.id), k, n).noalias() += as_mat(a.value()).transpose() * G;
  });
}

/// [m,k] x [n,k]^T -> [m,n]
inline Var matmul_bt(Var a, Var b) {
  detail::check_same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols()) {
    detail::shape_fail("matmul_bt", {av.shape(), bv.shape()});
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor y(Shape{m, n});
  as_mat(y.values(), m, n).noalias() = as_mat(av) * as_mat(bv).transpose();
  return a.tape->record("matmul_bt", std::move(y), [a, b, m, k, n](Tape& t, const std::vector<double>& g) {
    const auto G = CMatMap(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    as_mat(t.grad(a.id), m, k).noalias() += G * as_mat(b.value());
    as_mat(t.grad(b.id), n, k).noalias() += G.transpose() * as_mat(a.value());
  });
}

/// [m,k] x [k] -> [m]
inline Var matvec(Var w, Var x) {
  detail::check_same_tape({w, x});
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  if (wv.rank() != 2 || xv.rank() != 1 || wv.cols() != xv.size()) {
    detail::shape_fail("matvec", {wv.shape(), xv.shape()});
  }
  const std::size_t m = wv.rows(), k = wv.cols();
  Tensor y(Shape{m});
  as_vec(y.values()).noalias() = as_mat(wv) * as_vec(xv);
  return w.tape->record("matvec", std::move(y), [w, x, m, k](Tape& t, const std::vector<double>& g) {
    const auto G = as_vec(g);
    as_mat(t.grad(w.id), m, k).noalias() += G * as_vec(x.value()).transpose();
    as_vec(t.grad(x.id)).noalias() += as_mat(w.value()).transpose() * G;
  });
}

/// [n,d]^T x [n] -> [d]
inline Var matvec_t(Var m, Var a) {
  detail::check_same_tape({m, a});
  const Tensor& mv = m.value();
  const Tensor& av = a.value();
  if (mv.rank() != 2 || av.rank() != 1 || mv.rows() != av.size()) {
    detail::shape_fail("matvec_t", {mv.shape(), av.shape()});
  }
  const std::size_t n = mv.rows(), d = mv.cols();
  Tensor y(Shape{d});
  as_vec(y.values()).noalias() = as_mat(mv).transpose() * as_vec(av);
  return m.tape->record("matvec_t", std::move(y), [m, a, n, d](Tape& t, const std::vector<double>& g) {
    const auto G = as_vec(g);
    as_mat(t.grad(m.id), n, d).noalias() += as_vec(a.value()) * G.transpose();
    as_vec(t.grad(a.id)).noalias() += as_mat(m.value()) * G;
  });
}

inline Var add(Var a, Var b) {
  detail::check_same_tape({a, b});
  if (a.shape() != b.shape()) detail::shape_fail("add", {a.shape(), b.shape()});
  Tensor y(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return a.tape->record("add", std::move(y), [a, b](Tape& t, const std::vector<double>& g) {
    as_vec(t.grad(a.id)) += as_vec(g);
    as_vec(t.grad(b.id)) += as_vec(g);
  });
}

/// Adds vector `v` [k] to every row of `m` [n,k].
inline Var add_row(Var m, Var v) {
  detail::check_same_tape({m, v});
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || mv.cols() != vv.size()) {
    detail::shape_fail("add_row", {mv.shape(), vv.shape()});
  }
  const std::size_t n = mv.rows(), k = mv.cols();
  Tensor y = mv;
  as_mat(y.values(), n, k).rowwise() += as_vec(vv).transpose();
  return m.tape->record("add_row", std::move(y), [m, v, n, k](Tape& t, const std::vector<double>& g) {
    const auto G = CMatMap(g.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    as_vec(t.grad(m.id)) += as_vec(g);
    as_vec(t.grad(v.id)) += G.colwise().sum().transpose();
  });
}

inline Var scale(Var x, double c) {
  Tensor y = x.value();
  for (auto& e : y.values()) e *= c;
  return x.tape->record("scale", std::move(y), [x, c](Tape& t, const std::vector<double>& g) {
    as_vec(t.grad(x.id)) += c * as_vec(g);
  });
}

/// Sum of all elements, as a scalar.
inline Var sum(Var x) {
  const auto& xv = x.value().values();
  double s = 0.0;
  for (double e : xv) s += e;
  return x.tape->record("sum", Tensor::scalar(s), [x](Tape& t, const std::vector<double>& g) {
    for (auto& e : t.grad(x.id)) e += g[0];
  });
}

inline Var dot(Var a, Var b) {
  detail::check_same_tape({a, b});
  if (a.size() != b.size() || a.value().rank() != 1 || b.value().rank() != 1) {
    detail::shape_fail("dot", {a.shape(), b.shape()});
  }
  const double s = as_vec(a.value()).dot(as_vec(b.value()));
  return a.tape->record("dot", Tensor::scalar(s), [a, b](Tape& t, const std::vector<double>& g) {
    as_vec(t.grad(a.id)) += g[0] * as_vec(b.value());
    as_vec(t.grad(b.id)) += g[0] * as_vec(a.value());
  });
}

/// Concatenates rank-1 tensors.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape != parts.front().tape) throw Error("operands recorded on different tapes");
    if (p.value().rank() != 1) detail::shape_fail("concat", {p.shape()});
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().values().begin(), p.value().values().end());
  }
  return parts.front().tape->record(
      "concat", Tensor::vector(std::move(out)), [parts, offsets](Tape& t, const std::vector<double>& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          auto& pg = t.grad(parts[k].id);
          for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[offsets[k] + i];
        }
      });
}

/// Concatenates rank-2 tensors with equal row counts along columns.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t n = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != n) {
      detail::shape_fail("concat_cols", {parts.front().shape(), p.shape()});
    }
    total += p.value().cols();
  }
  Tensor y(Shape{n, total});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const auto& pv = p.value();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) y.at(r, off + c) = pv.at(r, c);
    }
    off += pv.cols();
  }
  return parts.front().tape->record(
      "concat_cols", std::move(y), [parts, offsets, n, total](Tape& t, const std::vector<double>& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          const std::size_t w = parts[k].value().cols();
          auto& pg = t.grad(parts[k].id);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < w; ++c) pg[r * w + c] += g[r * total + offsets[k] + c];
          }
        }
      });
}

/// Stacks equal-length rank-1 tensors into the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no operands");
  const std::size_t k = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * k);
  for (const Var& r : rows) {
    if (r.value().rank() != 1 || r.size() != k) detail::shape_fail("stack_rows", {rows.front().shape(), r.shape()});
    out.insert(out.end(), r.value().values().begin(), r.value().values().end());
  }
  const std::size_t n = rows.size();
  return rows.front().tape->record(
      "stack_rows", Tensor::matrix(n, k, std::move(out)), [rows, k](Tape& t, const std::vector<double>& g) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
          auto& rg = t.grad(rows[r].id);
          for (std::size_t i = 0; i < k; ++i) rg[i] += g[r * k + i];
        }
      });
}

/// Elements [begin, begin + len) of a rank-1 tensor.
inline Var slice(Var x, std::size_t begin, std::size_t len) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || begin + len > xv.size()) {
    throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                     ") out of range for shape " + shape_str(xv.shape()));
  }
  std::vector<double> out(xv.values().begin() + static_cast<std::ptrdiff_t>(begin),
                          xv.values().begin() + static_cast<std::ptrdiff_t>(begin + len));
  return x.tape->record("slice", Tensor::vector(std::move(out)), [x, begin, len](Tape& t, const std::vector<double>& g) {
    auto& xg = t.grad(x.id);
    for (std::size_t i = 0; i < len; ++i) xg[begin + i] += g[i];
  });
}

inline Var tanh(Var x) {
  Tensor y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
  Tape& tape = *x.tape;
  const std::size_t out_id = tape.size();
  return tape.record("tanh", std::move(y), [x, out_id](Tape& t, const std::vector<double>& g) {
    const auto& yv = t.value(out_id);
    auto& xg = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Var sigmoid(Var x) {
  Tensor y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_scalar(xv[i]);
  Tape& tape = *x.tape;
  const std::size_t out_id = tape.size();
  return tape.record("sigmoid", std::move(y), [x, out_id](Tape& t, const std::vector<double>& g) {
    const auto& yv = t.value(out_id);
    auto& xg = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

/// Row-wise softmax of a matrix; a vector is treated as a single row.
inline Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.rank() > 2) detail::shape_fail("softmax_rows", {xv.shape()});
  const std::size_t n = xv.rows(), k = xv.cols();
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, xv[r * k + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      y[r * k + c] = std::exp(xv[r * k + c] - mx);
      z += y[r * k + c];
    }
    for (std::size_t c = 0; c < k; ++c) y[r * k + c] /= z;
  }
  Tape& tape = *x.tape;
  const std::size_t out_id = tape.size();
  return tape.record("softmax_rows", std::move(y), [x, out_id, n, k](Tape& t, const std::vector<double>& g) {
    const auto& yv = t.value(out_id);
    auto& xg = t.grad(x.id);
    for (std::size_t r = 0; r < n; ++r) {
      double gy = 0.0;
      for (std::size_t c = 0; c < k; ++c) gy += g[r * k + c] * yv[r * k + c];
      for (std::size_t c = 0; c < k; ++c) xg[r * k + c] += yv[r * k + c] * (g[r * k + c] - gy);
    }
  });
}

/// Convolves `width`-wide filters over the rows of `x` [L, C] and max-pools
/// each filter over positions. `filters` is [K, width*C] (a window flattened
/// row-major), `bias` is [K]. Inputs shorter than the filter are zero-padded
/// at the end to one full window.
inline Var conv1d_maxpool(Var x, Var filters, Var bias, std::size_t width) {
  detail::check_same_tape({x, filters, bias});
  const Tensor& xv = x.value();
  const Tensor& fv = filters.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || fv.rank() != 2 || bv.rank() != 1 || width == 0 ||
      fv.cols() != width * xv.cols() || fv.rows() != bv.size() || xv.rows() == 0) {
    detail::shape_fail("conv1d_maxpool", {xv.shape(), fv.shape(), bv.shape()});
  }
  const std::size_t len = xv.rows(), ch = xv.cols(), k = fv.rows();
  const std::size_t padded = std::max(len, width);
  const std::size_t positions = padded - width + 1;
  std::vector<double> window(width * ch);
  auto fill_window = [&](std::size_t p) {
    for (std::size_t j = 0; j < width; ++j) {
      for (std::size_t c = 0; c < ch; ++c) {
        window[j * ch + c] = (p + j < len) ? xv.at(p + j, c) : 0.0;
      }
    }
  };
  Tensor y(Shape{k}, -INFINITY);
  std::vector<std::size_t> argmax(k, 0);
  const auto F = as_mat(fv);
  for (std::size_t p = 0; p < positions; ++p) {
    fill_window(p);
    const Eigen::VectorXd r = F * as_vec(window) + as_vec(bv);
    for (std::size_t f = 0; f < k; ++f) {
      if (r[static_cast<Eigen::Index>(f)] > y[f]) {
        y[f] = r[static_cast<Eigen::Index>(f)];
        argmax[f] = p;
      }
    }
  }
  return x.tape->record(
      "conv1d_maxpool", std::move(y),
      [x, filters, bias, width, len, ch, k, argmax](Tape& t, const std::vector<double>& g) {
        const Tensor& xv2 = x.value();
        const Tensor& fv2 = filters.value();
        auto& xg = t.grad(x.id);
        auto& fg = t.grad(filters.id);
        auto& bg = t.grad(bias.id);
        const std::size_t wc = width * ch;
        for (std::size_t f = 0; f < k; ++f) {
          const double gf = g[f];
          if (gf == 0.0) continue;
          bg[f] += gf;
          const std::size_t p = argmax[f];
          for (std::size_t j = 0; j < width && p + j < len; ++j) {
            for (std::size_t c = 0; c < ch; ++c) {
              fg[f * wc + j * ch + c] += gf * xv2.at(p + j, c);
              xg[(p + j) * ch + c] += gf * fv2[f * wc + j * ch + c];
            }
          }
        }
      });
}

/// One LSTM step. `w` is [4H, X+H] acting on [x; h], `b` is [4H]; gate
/// blocks are ordered input, forget, candidate, output. Returns [h'; c'].
inline Var lstm_cell(Var x, Var h, Var c, Var w, Var b) {
  detail::check_same_tape({x, h, c, w, b});
  const std::size_t nx = x.size(), nh = h.size();
  const Tensor& wv = w.value();
  if (x.value().rank() != 1 || h.value().rank() != 1 || c.size() != nh || wv.rank() != 2 ||
      wv.rows() != 4 * nh || wv.cols() != nx + nh || b.size() != 4 * nh) {
    detail::shape_fail("lstm_cell", {x.shape(), h.shape(), c.shape(), w.shape(), b.shape()});
  }
  Eigen::VectorXd xh(static_cast<Eigen::Index>(nx + nh));
  xh.head(static_cast<Eigen::Index>(nx)) = as_vec(x.value());
  xh.tail(static_cast<Eigen::Index>(nh)) = as_vec(h.value());
  Eigen::VectorXd pre = as_mat(wv) * xh + as_vec(b.value());
  // gates: activated values, kept for backward
  std::vector<double> gates(4 * nh);
  for (std::size_t i = 0; i < nh; ++i) {
    gates[i] = sigmoid_scalar(pre[static_cast<Eigen::Index>(i)]);
    gates[nh + i] = sigmoid_scalar(pre[static_cast<Eigen::Index>(nh + i)]);
    gates[2 * nh + i] = std::tanh(pre[static_cast<Eigen::Index>(2 * nh + i)]);
    gates[3 * nh + i] = sigmoid_scalar(pre[static_cast<Eigen::Index>(3 * nh + i)]);
  }
  const auto& cv = c.value();
  Tensor y(Shape{2 * nh});
  std::vector<double> tanh_c(nh);
  for (std::size_t i = 0; i < nh; ++i) {
    const double cn = gates[nh + i] * cv[i] + gates[i] * gates[2 * nh + i];
    tanh_c[i] = std::tanh(cn);
    y[i] = gates[3 * nh + i] * tanh_c[i];
    y[nh + i] = cn;
  }
  return x.tape->record(
      "lstm_cell", std::move(y),
      [x, h, c, w, b, nx, nh, gates = std::move(gates), tanh_c = std::move(tanh_c),
       xh = std::move(xh)](Tape& t, const std::vector<double>& g) {
        const auto& cv2 = c.value();
        Eigen::VectorXd dpre(static_cast<Eigen::Index>(4 * nh));
        auto& cg = t.grad(c.id);
        for (std::size_t i = 0; i < nh; ++i) {
          const double ig = gates[i], fg = gates[nh + i], gg = gates[2 * nh + i], og = gates[3 * nh + i];
          const double dh = g[i];
          const double dc = g[nh + i] + dh * og * (1.0 - tanh_c[i] * tanh_c[i]);
          const auto I = static_cast<Eigen::Index>(i);
          const auto H = static_cast<Eigen::Index>(nh);
          dpre[I] = dc * gg * ig * (1.0 - ig);
          dpre[H + I] = dc * cv2[i] * fg * (1.0 - fg);
          dpre[2 * H + I] = dc * ig * (1.0 - gg * gg);
          dpre[3 * H + I] = dh * tanh_c[i] * og * (1.0 - og);
          cg[i] += dc * fg;
        }
        as_mat(t.grad(w.id), 4 * nh, nx + nh).noalias() += dpre * xh.transpose();
        as_vec(t.grad(b.id)) += dpre;
        const Eigen::VectorXd dxh = as_mat(w.value()).transpose() * dpre;
        as_vec(t.grad(x.id)) += dxh.head(static_cast<Eigen::Index>(nx));
        as_vec(t.grad(h.id)) += dxh.tail(static_cast<Eigen::Index>(nh));
      });
}

/// Inverted dropout: in training, zeroes each element with probability `p`
/// and scales survivors by 1/(1-p). Identity when not training or p == 0.
inline Var dropout(Var x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return x.tape->record("dropout", std::move(y), [x, mask = std::move(mask)](Tape& t, const std::vector<double>& g) {
    auto& xg = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * mask[i];
  });
}

}  // namespace lmg::nn
