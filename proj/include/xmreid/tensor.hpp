// Copyright 2026 The xmreid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xmreid/errors.hpp"

namespace xmreid {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_size(const Shape& shape) {
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

inline void require_positive_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (Eigen::Index d : shape)
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

enum class RunMode { train, eval };

/// Running batch-norm statistics; owned by the model, mutated only by
/// train-mode forward passes.
template <typename S>
struct BatchNormState {
  ArrayX<S> running_mean;
  ArrayX<S> running_var;

  static BatchNormState identity(Eigen::Index channels) {
    BatchNormState st;
    st.running_mean = ArrayX<S>::Zero(channels);
    st.running_var = ArrayX<S>::Ones(channels);
    return st;
  }
};

template <typename S>
class Tape;

/// Lightweight handle to a value recorded on a Tape.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<S>* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape<S>* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  Eigen::Index size() const;
  // 2D view extents: rank-1 tensors are treated as a single row.
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const ArrayX<S>& values() const;
  bool requires_grad() const;
  /// Value of a 1-element tensor.
  S item() const;
  /// Accumulated gradient of a requires_grad leaf.
  const ArrayX<S>& grad() const;

 private:
  Tape<S>* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Eager reverse-mode tape: every op computes its value immediately and
/// records a closure that scatters upstream gradient into its inputs.
/// Creation order is the topological order; backward walks it once, in
/// reverse. Interior gradients are scratch, re-derived per backward call;
/// leaf gradients accumulate additively across calls.
template <typename S>
class Tape {
 public:
  struct Node {
    Shape shape;
    ArrayX<S> values;
    ArrayX<S> grad;        // scratch, valid only during a backward pass
    ArrayX<S> grad_accum;  // leaves only
    bool requires_grad = false;
    bool is_leaf = false;
    std::string op;
    std::function<void()> backprop;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When set, every op verifies its output is finite and throws
  /// NumericError otherwise. Off by default.
  void set_check_finite(bool on) { check_finite_ = on; }
  bool check_finite() const { return check_finite_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  /// Id the next emitted node will receive; closures capture it before emit.
  std::int32_t next_id() const { return static_cast<std::int32_t>(nodes_.size()); }

  Tensor<S> leaf(Shape shape, ArrayX<S> values, bool requires_grad, std::string name = "leaf") {
    require_positive_extents(shape);
    if (shape_size(shape) != values.size())
      throw ShapeError("leaf '" + name + "': shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    Node node;
    node.shape = std::move(shape);
    node.values = std::move(values);
    node.requires_grad = requires_grad;
    node.is_leaf = true;
    node.op = std::move(name);
    if (requires_grad) node.grad_accum = ArrayX<S>::Zero(node.values.size());
    nodes_.push_back(std::move(node));
    return Tensor<S>(this, next_id() - 1);
  }

  Tensor<S> constant(Shape shape, ArrayX<S> values, std::string name = "const") {
    return leaf(std::move(shape), std::move(values), false, std::move(name));
  }

  Tensor<S> scalar(S value, bool requires_grad = false, std::string name = "scalar") {
    ArrayX<S> v(1);
    v[0] = value;
    return leaf({1, 1}, std::move(v), requires_grad, std::move(name));
  }

  Tensor<S> emit(Shape shape, ArrayX<S> values, bool requires_grad, std::string op,
                 std::function<void()> backprop) {
    require_positive_extents(shape);
    if (shape_size(shape) != values.size())
      throw ShapeError("op '" + op + "': shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    if (check_finite_ && !values.allFinite())
      throw NumericError("non-finite values produced by op '" + op + "'");
    Node node;
    node.shape = std::move(shape);
    node.values = std::move(values);
    node.requires_grad = requires_grad;
    node.op = std::move(op);
    if (requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Tensor<S>(this, next_id() - 1);
  }

  /// Populates dLoss/dLeaf for every requires_grad leaf reachable from
  /// `loss`. Repeated calls accumulate: two passes give exactly 2x one.
  void backward(const Tensor<S>& loss) {
    check_same_tape(loss, "backward");
    if (nodes_.empty()) throw ShapeError("backward on an empty tape");
    if (loss.size() != 1)
      throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    const std::int32_t last = loss.id();
    if (!nodes_[last].requires_grad) return;  // constant loss: leaf grads gain zero
    for (std::int32_t i = 0; i <= last; ++i) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.grad.size() != n.values.size())
        n.grad = ArrayX<S>::Zero(n.values.size());
      else
        n.grad.setZero();
    }
    nodes_[last].grad[0] = S(1);
    for (std::int32_t i = last; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backprop) n.backprop();
    }
    for (std::int32_t i = 0; i <= last; ++i) {
      Node& n = nodes_[i];
      if (n.is_leaf && n.requires_grad) n.grad_accum += n.grad;
    }
  }

  /// Clears accumulated leaf gradients.
  void zero_grad() {
    for (Node& n : nodes_)
      if (n.is_leaf && n.requires_grad) n.grad_accum.setZero();
  }

  Node& node(std::int32_t id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  void check_same_tape(const Tensor<S>& t, const char* op) const {
    if (t.tape() != this)
      throw ShapeError(std::string(op) + ": tensor belongs to a different tape");
  }

 private:
  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

template <typename S>
const Shape& Tensor<S>::shape() const { return tape_->node(id_).shape; }
template <typename S>
Eigen::Index Tensor<S>::size() const { return tape_->node(id_).values.size(); }
template <typename S>
Eigen::Index Tensor<S>::rows() const {
  const Shape& s = shape();
  return s.size() == 1 ? 1 : s[0];
}
template <typename S>
Eigen::Index Tensor<S>::cols() const {
  const Shape& s = shape();
  return s.size() == 1 ? s[0] : s[1];
}
template <typename S>
const ArrayX<S>& Tensor<S>::values() const { return tape_->node(id_).values; }
template <typename S>
bool Tensor<S>::requires_grad() const { return tape_->node(id_).requires_grad; }
template <typename S>
S Tensor<S>::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return values()[0];
}
template <typename S>
const ArrayX<S>& Tensor<S>::grad() const {
  const auto& n = tape_->node(id_);
  if (!n.is_leaf || !n.requires_grad)
    throw ShapeError("grad() is only defined for requires_grad leaves");
  return n.grad_accum;
}

namespace detail {

template <typename S>
Eigen::Index node_rows(const typename Tape<S>::Node& n) {
  return n.shape.size() == 1 ? 1 : n.shape[0];
}
template <typename S>
Eigen::Index node_cols(const typename Tape<S>::Node& n) {
  return n.shape.size() == 1 ? n.shape[0] : n.shape[1];
}

template <typename S>
void require_rank2(const Tensor<S>& t, const char* op) {
  if (t.shape().size() > 2)
    throw ShapeError(std::string(op) + ": expected a matrix or vector, got " +
                     shape_str(t.shape()));
}

template <typename S>
Eigen::Map<const MatrixRM<S>> value_mat(Tape<S>* tape, std::int32_t id, Eigen::Index r,
                                        Eigen::Index c) {
  return Eigen::Map<const MatrixRM<S>>(tape->node(id).values.data(), r, c);
}

template <typename S>
Eigen::Map<MatrixRM<S>> grad_mat(Tape<S>* tape, std::int32_t id, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<MatrixRM<S>>(tape->node(id).grad.data(), r, c);
}

/// Resolves the broadcast of two operand shapes. Allowed: equal shapes, a
/// 1-element scalar against anything, a single row against a matrix with the
/// same column count. Anything else is an error.
template <typename S>
std::pair<Eigen::Index, Eigen::Index> broadcast_extents(const Tensor<S>& a, const Tensor<S>& b,
                                                        const char* op) {
  require_rank2(a, op);
  require_rank2(b, op);
  const Eigen::Index ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  if (ar == br && ac == bc) return {ar, ac};
  if (a.size() == 1) return {br, bc};
  if (b.size() == 1) return {ar, ac};
  if (ar == 1 && ac == bc) return {br, bc};
  if (br == 1 && bc == ac) return {ar, ac};
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcastable (scalar or row only)");
}

/// Materializes operand values to a full R*C array under the broadcast rules.
template <typename S>
ArrayX<S> broadcast_full(const ArrayX<S>& v, Eigen::Index R, Eigen::Index C) {
  if (v.size() == R * C) return v;
  if (v.size() == 1) return ArrayX<S>::Constant(R * C, v[0]);
  ArrayX<S> out(R * C);
  Eigen::Map<MatrixRM<S>>(out.data(), R, C) =
      Eigen::Map<const MatrixRM<S>>(v.data(), 1, C).replicate(R, 1);
  return out;
}

/// Adds a full-size gradient into input `id`, contracting over broadcast
/// dimensions (sum over replicated rows, or total sum for scalars).
template <typename S>
void accumulate_bcast(Tape<S>* tape, std::int32_t id, const ArrayX<S>& gfull, Eigen::Index R,
                      Eigen::Index C) {
  auto& n = tape->node(id);
  if (!n.requires_grad) return;
  if (n.values.size() == R * C) {
    n.grad += gfull;
  } else if (n.values.size() == 1) {
    n.grad[0] += gfull.sum();
  } else {
    Eigen::Map<const MatrixRM<S>> gm(gfull.data(), R, C);
    Eigen::Map<MatrixRM<S>>(n.grad.data(), 1, C) += gm.colwise().sum();
  }
}

template <typename S>
Shape broadcast_out_shape(const Tensor<S>& a, const Tensor<S>& b, Eigen::Index R, Eigen::Index C) {
  if (a.rows() == R && a.cols() == C) return a.shape();
  if (b.rows() == R && b.cols() == C) return b.shape();
  return {R, C};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>* tape = a.tape();
  tape->check_same_tape(b, "matmul");
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  const Eigen::Index m = a.rows(), k = a.cols(), n = b.cols();
  MatrixRM<S> c = detail::value_mat(tape, a.id(), m, k) * detail::value_mat(tape, b.id(), k, n);
  ArrayX<S> out = Eigen::Map<ArrayX<S>>(c.data(), c.size());
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t aid = a.id(), bid = b.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, aid, bid, oid, m, k, n]() {
      Eigen::Map<const MatrixRM<S>> gout(tape->node(oid).grad.data(), m, n);
      if (tape->node(aid).requires_grad)
        detail::grad_mat(tape, aid, m, k) +=
            gout * detail::value_mat(tape, bid, k, n).transpose();
      if (tape->node(bid).requires_grad)
        detail::grad_mat(tape, bid, k, n) +=
            detail::value_mat(tape, aid, m, k).transpose() * gout;
    };
  }
  return tape->emit({m, n}, std::move(out), rg, "matmul", std::move(bp));
}

// ---------------------------------------------------------------------------
// binary elementwise ops with scalar/row broadcasting

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>* tape = a.tape();
  tape->check_same_tape(b, "add");
  auto [R, C] = detail::broadcast_extents(a, b, "add");
  ArrayX<S> out = detail::broadcast_full(a.values(), R, C) + detail::broadcast_full(b.values(), R, C);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t aid = a.id(), bid = b.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, aid, bid, oid, R = R, C = C]() {
      const ArrayX<S>& g = tape->node(oid).grad;
      detail::accumulate_bcast(tape, aid, g, R, C);
      detail::accumulate_bcast(tape, bid, g, R, C);
    };
  }
  return tape->emit(detail::broadcast_out_shape(a, b, R, C), std::move(out), rg, "add",
                    std::move(bp));
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>* tape = a.tape();
  tape->check_same_tape(b, "sub");
  auto [R, C] = detail::broadcast_extents(a, b, "sub");
  ArrayX<S> out = detail::broadcast_full(a.values(), R, C) - detail::broadcast_full(b.values(), R, C);
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t aid = a.id(), bid = b.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, aid, bid, oid, R = R, C = C]() {
      const ArrayX<S>& g = tape->node(oid).grad;
      detail::accumulate_bcast(tape, aid, g, R, C);
      ArrayX<S> gneg = -g;
      detail::accumulate_bcast(tape, bid, gneg, R, C);
    };
  }
  return tape->emit(detail::broadcast_out_shape(a, b, R, C), std::move(out), rg, "sub",
                    std::move(bp));
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>* tape = a.tape();
  tape->check_same_tape(b, "mul");
  auto [R, C] = detail::broadcast_extents(a, b, "mul");
  ArrayX<S> af = detail::broadcast_full(a.values(), R, C);
  ArrayX<S> bf = detail::broadcast_full(b.values(), R, C);
  ArrayX<S> out = af * bf;
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::int32_t aid = a.id(), bid = b.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, aid, bid, oid, R = R, C = C]() {
      const ArrayX<S>& g = tape->node(oid).grad;
      if (tape->node(aid).requires_grad) {
        ArrayX<S> ga = g * detail::broadcast_full(tape->node(bid).values, R, C);
        detail::accumulate_bcast(tape, aid, ga, R, C);
      }
      if (tape->node(bid).requires_grad) {
        ArrayX<S> gb = g * detail::broadcast_full(tape->node(aid).values, R, C);
        detail::accumulate_bcast(tape, bid, gb, R, C);
      }
    };
  }
  return tape->emit(detail::broadcast_out_shape(a, b, R, C), std::move(out), rg, "mul",
                    std::move(bp));
}

// ---------------------------------------------------------------------------
// unary elementwise ops

namespace detail {

/// `val` maps input values to output values; `der` maps (input values,
/// output values) to the elementwise derivative d out / d in.
template <typename S, typename ValFn, typename DerFn>
Tensor<S> unary_op(const Tensor<S>& x, std::string name, ValFn val, DerFn der) {
  Tape<S>* tape = x.tape();
  ArrayX<S> out = val(x.values());
  const bool rg = x.requires_grad();
  const std::int32_t xid = x.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, xid, oid, der]() {
      auto& xn = tape->node(xid);
      const ArrayX<S>& g = tape->node(oid).grad;
      xn.grad += g * der(xn.values, tape->node(oid).values);
    };
  }
  return tape->emit(x.shape(), std::move(out), rg, std::move(name), std::move(bp));
}

}  // namespace detail

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return detail::unary_op(
      x, "relu", [](const ArrayX<S>& v) { return ArrayX<S>(v.max(S(0))); },
      [](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>((v > S(0)).template cast<S>());
      });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary_op(
      x, "exp", [](const ArrayX<S>& v) { return ArrayX<S>(v.exp()); },
      [](const ArrayX<S>&, const ArrayX<S>& out) { return out; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  if ((x.values() <= S(0)).any())
    throw DomainError("log: non-positive input (clamp_min first)");
  return detail::unary_op(
      x, "log", [](const ArrayX<S>& v) { return ArrayX<S>(v.log()); },
      [](const ArrayX<S>& v, const ArrayX<S>&) { return ArrayX<S>(v.inverse()); });
}

template <typename S>
Tensor<S> pow_scalar(const Tensor<S>& x, S exponent) {
  if (exponent != std::floor(exponent) && (x.values() < S(0)).any())
    throw DomainError("pow_scalar: negative base with non-integer exponent " +
                      std::to_string(exponent) + " (clamp_min first)");
  return detail::unary_op(
      x, "pow_scalar",
      [exponent](const ArrayX<S>& v) { return ArrayX<S>(v.pow(exponent)); },
      [exponent](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>(exponent * v.pow(exponent - S(1)));
      });
}

template <typename S>
Tensor<S> clamp_min(const Tensor<S>& x, S floor_value) {
  return detail::unary_op(
      x, "clamp_min",
      [floor_value](const ArrayX<S>& v) { return ArrayX<S>(v.max(floor_value)); },
      [floor_value](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>((v >= floor_value).template cast<S>());
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  return detail::unary_op(
      x, "scale", [factor](const ArrayX<S>& v) { return ArrayX<S>(factor * v); },
      [factor](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>(ArrayX<S>::Constant(v.size(), factor));
      });
}

// ---------------------------------------------------------------------------
// reductions

enum class ReduceKind { mean, sum, max };
enum class Axis { all, rows, cols };  // rows collapses rows to [1xC]; cols collapses columns to [Rx1]

template <typename S>
Tensor<S> reduce(const Tensor<S>& t, ReduceKind kind, Axis axis = Axis::all) {
  Tape<S>* tape = t.tape();
  detail::require_rank2(t, "reduce");
  const Eigen::Index R = t.rows(), C = t.cols();
  const ArrayX<S>& v = t.values();
  Eigen::Map<const MatrixRM<S>> m(v.data(), R, C);

  Shape out_shape;
  ArrayX<S> out;
  std::vector<Eigen::Index> argmax;  // flat value indices, max only
  if (axis == Axis::all) {
    out_shape = {1, 1};
    out.resize(1);
    if (kind == ReduceKind::sum) out[0] = v.sum();
    else if (kind == ReduceKind::mean) out[0] = v.sum() / S(v.size());
    else {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
      out[0] = v[best];
      argmax = {best};
    }
  } else if (axis == Axis::rows) {
    out_shape = {1, C};
    out.resize(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      if (kind == ReduceKind::max) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < R; ++r)
          if (m(r, c) > m(best, c)) best = r;
        out[c] = m(best, c);
        argmax.push_back(best * C + c);
      } else {
        S s = m.col(c).sum();
        out[c] = kind == ReduceKind::mean ? s / S(R) : s;
      }
    }
  } else {
    out_shape = {R, 1};
    out.resize(R);
    for (Eigen::Index r = 0; r < R; ++r) {
      if (kind == ReduceKind::max) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < C; ++c)
          if (m(r, c) > m(r, best)) best = c;
        out[r] = m(r, best);
        argmax.push_back(r * C + best);
      } else {
        S s = m.row(r).sum();
        out[r] = kind == ReduceKind::mean ? s / S(C) : s;
      }
    }
  }

  const bool rg = t.requires_grad();
  const std::int32_t tid = t.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, tid, oid, kind, axis, R, C, argmax = std::move(argmax)]() {
      auto& tn = tape->node(tid);
      const ArrayX<S>& g = tape->node(oid).grad;
      if (kind == ReduceKind::max) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(argmax.size()); ++i)
          tn.grad[argmax[static_cast<std::size_t>(i)]] += g[i];
        return;
      }
      Eigen::Map<MatrixRM<S>> gt(tn.grad.data(), R, C);
      if (axis == Axis::all) {
        const S w = kind == ReduceKind::mean ? g[0] / S(R * C) : g[0];
        tn.grad += w;
      } else if (axis == Axis::rows) {
        const S div = kind == ReduceKind::mean ? S(R) : S(1);
        Eigen::Map<const MatrixRM<S>> gr(g.data(), 1, C);
        gt += (gr / div).replicate(R, 1);
      } else {
        const S div = kind == ReduceKind::mean ? S(C) : S(1);
        Eigen::Map<const MatrixRM<S>> gc(g.data(), R, 1);
        gt += (gc / div).replicate(1, C);
      }
    };
  }
  return tape->emit(std::move(out_shape), std::move(out), rg, "reduce", std::move(bp));
}

template <typename S>
Tensor<S> reduce_sum(const Tensor<S>& t, Axis axis = Axis::all) {
  return reduce(t, ReduceKind::sum, axis);
}
template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& t, Axis axis = Axis::all) {
  return reduce(t, ReduceKind::mean, axis);
}
template <typename S>
Tensor<S> reduce_max(const Tensor<S>& t, Axis axis = Axis::all) {
  return reduce(t, ReduceKind::max, axis);
}

// ---------------------------------------------------------------------------
// row segments: contiguous groups of rows reduced to one row each

namespace detail {

inline void check_segments(Eigen::Index R, const std::vector<Eigen::Index>& sizes,
                           const char* op) {
  Eigen::Index total = 0;
  for (Eigen::Index s : sizes) {
    if (s <= 0) throw ShapeError(std::string(op) + ": segment sizes must be positive");
    total += s;
  }
  if (total != R)
    throw ShapeError(std::string(op) + ": segment sizes sum to " + std::to_string(total) +
                     ", expected " + std::to_string(R) + " rows");
}

}  // namespace detail

template <typename S>
Tensor<S> segment_mean(const Tensor<S>& t, const std::vector<Eigen::Index>& sizes) {
  Tape<S>* tape = t.tape();
  detail::require_rank2(t, "segment_mean");
  const Eigen::Index R = t.rows(), C = t.cols();
  detail::check_segments(R, sizes, "segment_mean");
  const Eigen::Index G = static_cast<Eigen::Index>(sizes.size());
  Eigen::Map<const MatrixRM<S>> m(t.values().data(), R, C);
  ArrayX<S> out(G * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), G, C);
  Eigen::Index row = 0;
  for (Eigen::Index g = 0; g < G; ++g) {
    om.row(g) = m.middleRows(row, sizes[static_cast<std::size_t>(g)]).colwise().sum() /
                S(sizes[static_cast<std::size_t>(g)]);
    row += sizes[static_cast<std::size_t>(g)];
  }
  const bool rg = t.requires_grad();
  const std::int32_t tid = t.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, tid, oid, sizes, R, C, G]() {
      Eigen::Map<MatrixRM<S>> gt(tape->node(tid).grad.data(), R, C);
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), G, C);
      Eigen::Index row = 0;
      for (Eigen::Index g = 0; g < G; ++g) {
        const Eigen::Index n = sizes[static_cast<std::size_t>(g)];
        gt.middleRows(row, n) += (go.row(g) / S(n)).replicate(n, 1);
        row += n;
      }
    };
  }
  return tape->emit({G, C}, std::move(out), rg, "segment_mean", std::move(bp));
}

template <typename S>
Tensor<S> segment_max(const Tensor<S>& t, const std::vector<Eigen::Index>& sizes) {
  Tape<S>* tape = t.tape();
  detail::require_rank2(t, "segment_max");
  const Eigen::Index R = t.rows(), C = t.cols();
  detail::check_segments(R, sizes, "segment_max");
  const Eigen::Index G = static_cast<Eigen::Index>(sizes.size());
  Eigen::Map<const MatrixRM<S>> m(t.values().data(), R, C);
  ArrayX<S> out(G * C);
  std::vector<Eigen::Index> argrow(static_cast<std::size_t>(G * C));
  Eigen::Index row = 0;
  for (Eigen::Index g = 0; g < G; ++g) {
    const Eigen::Index n = sizes[static_cast<std::size_t>(g)];
    for (Eigen::Index c = 0; c < C; ++c) {
      Eigen::Index best = row;
      for (Eigen::Index r = row + 1; r < row + n; ++r)
        if (m(r, c) > m(best, c)) best = r;
      out[g * C + c] = m(best, c);
      argrow[static_cast<std::size_t>(g * C + c)] = best;
    }
    row += n;
  }
  const bool rg = t.requires_grad();
  const std::int32_t tid = t.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, tid, oid, argrow = std::move(argrow), C, G]() {
      auto& tn = tape->node(tid);
      const ArrayX<S>& g = tape->node(oid).grad;
      for (Eigen::Index i = 0; i < G * C; ++i)
        tn.grad[argrow[static_cast<std::size_t>(i)] * C + (i % C)] += g[i];
    };
  }
  return tape->emit({G, C}, std::move(out), rg, "segment_max", std::move(bp));
}

// ---------------------------------------------------------------------------
// row gather / concatenation

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& t, const std::vector<Eigen::Index>& indices) {
  Tape<S>* tape = t.tape();
  detail::require_rank2(t, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const Eigen::Index R = t.rows(), C = t.cols();
  for (Eigen::Index i : indices)
    if (i < 0 || i >= R)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(R) + ")");
  const Eigen::Index O = static_cast<Eigen::Index>(indices.size());
  Eigen::Map<const MatrixRM<S>> m(t.values().data(), R, C);
  ArrayX<S> out(O * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), O, C);
  for (Eigen::Index i = 0; i < O; ++i) om.row(i) = m.row(indices[static_cast<std::size_t>(i)]);
  const bool rg = t.requires_grad();
  const std::int32_t tid = t.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, tid, oid, indices, R, C, O]() {
      Eigen::Map<MatrixRM<S>> gt(tape->node(tid).grad.data(), R, C);
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), O, C);
      for (Eigen::Index i = 0; i < O; ++i)
        gt.row(indices[static_cast<std::size_t>(i)]) += go.row(i);
    };
  }
  return tape->emit({O, C}, std::move(out), rg, "gather_rows", std::move(bp));
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape<S>* tape = parts[0].tape();
  const Eigen::Index C = parts[0].cols();
  Eigen::Index R = 0;
  bool rg = false;
  for (const auto& p : parts) {
    tape->check_same_tape(p, "concat_rows");
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != C)
      throw ShapeError("concat_rows: column mismatch, " + std::to_string(p.cols()) + " vs " +
                       std::to_string(C));
    R += p.rows();
    rg = rg || p.requires_grad();
  }
  ArrayX<S> out(R * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), R, C);
  std::vector<std::int32_t> ids;
  std::vector<Eigen::Index> rows;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    om.middleRows(at, p.rows()) = detail::value_mat(tape, p.id(), p.rows(), p.cols());
    ids.push_back(p.id());
    rows.push_back(p.rows());
    at += p.rows();
  }
  const std::int32_t oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, oid, ids = std::move(ids), rows = std::move(rows), R, C]() {
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), R, C);
      Eigen::Index at = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& n = tape->node(ids[i]);
        if (n.requires_grad)
          Eigen::Map<MatrixRM<S>>(n.grad.data(), rows[i], C) += go.middleRows(at, rows[i]);
        at += rows[i];
      }
    };
  }
  return tape->emit({R, C}, std::move(out), rg, "concat_rows", std::move(bp));
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape<S>* tape = parts[0].tape();
  const Eigen::Index R = parts[0].rows();
  Eigen::Index C = 0;
  bool rg = false;
  for (const auto& p : parts) {
    tape->check_same_tape(p, "concat_cols");
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != R)
      throw ShapeError("concat_cols: row mismatch, " + std::to_string(p.rows()) + " vs " +
                       std::to_string(R));
    C += p.cols();
    rg = rg || p.requires_grad();
  }
  ArrayX<S> out(R * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), R, C);
  std::vector<std::int32_t> ids;
  std::vector<Eigen::Index> cols;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    om.middleCols(at, p.cols()) = detail::value_mat(tape, p.id(), p.rows(), p.cols());
    ids.push_back(p.id());
    cols.push_back(p.cols());
    at += p.cols();
  }
  const std::int32_t oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, oid, ids = std::move(ids), cols = std::move(cols), R, C]() {
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), R, C);
      Eigen::Index at = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& n = tape->node(ids[i]);
        if (n.requires_grad)
          Eigen::Map<MatrixRM<S>>(n.grad.data(), R, cols[i]) += go.middleCols(at, cols[i]);
        at += cols[i];
      }
    };
  }
  return tape->emit({R, C}, std::move(out), rg, "concat_cols", std::move(bp));
}

// ---------------------------------------------------------------------------
// batch normalization over rows, per column

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BatchNormState<S>& state, RunMode mode, S eps = S(1e-5),
                     S momentum = S(0.1)) {
  Tape<S>* tape = x.tape();
  tape->check_same_tape(gamma, "batch_norm");
  tape->check_same_tape(beta, "batch_norm");
  detail::require_rank2(x, "batch_norm");
  const Eigen::Index B = x.rows(), C = x.cols();
  if (gamma.size() != C || beta.size() != C)
    throw ShapeError("batch_norm: gamma/beta must have " + std::to_string(C) + " channels");
  if (state.running_mean.size() != C || state.running_var.size() != C)
    throw ShapeError("batch_norm: running stats have wrong channel count");
  if (mode == RunMode::train && B < 2)
    throw ShapeError("batch_norm: train mode needs at least 2 rows, got " + std::to_string(B));

  Eigen::Map<const MatrixRM<S>> xm(x.values().data(), B, C);
  ArrayX<S> mean(C), var(C);
  if (mode == RunMode::train) {
    for (Eigen::Index c = 0; c < C; ++c) {
      const S mu = xm.col(c).sum() / S(B);
      mean[c] = mu;
      var[c] = (xm.col(c).array() - mu).square().sum() / S(B);  // biased, matches normalization
    }
    state.running_mean = (S(1) - momentum) * state.running_mean + momentum * mean;
    state.running_var = (S(1) - momentum) * state.running_var + momentum * var;
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  ArrayX<S> inv = (var + eps).sqrt().inverse();

  ArrayX<S> xhat(B * C);
  {
    Eigen::Map<MatrixRM<S>> xh(xhat.data(), B, C);
    for (Eigen::Index c = 0; c < C; ++c)
      xh.col(c) = (xm.col(c).array() - mean[c]) * inv[c];
  }
  ArrayX<S> out(B * C);
  {
    Eigen::Map<MatrixRM<S>> om(out.data(), B, C);
    Eigen::Map<const MatrixRM<S>> xh(xhat.data(), B, C);
    const ArrayX<S>& gv = gamma.values();
    const ArrayX<S>& bv = beta.values();
    for (Eigen::Index c = 0; c < C; ++c) om.col(c) = xh.col(c).array() * gv[c] + bv[c];
  }

  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  const std::int32_t xid = x.id(), gid = gamma.id(), bid = beta.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, xid, gid, bid, oid, B, C, mode, xhat = std::move(xhat), inv = std::move(inv)]() {
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), B, C);
      Eigen::Map<const MatrixRM<S>> xh(xhat.data(), B, C);
      auto& xn = tape->node(xid);
      auto& gn = tape->node(gid);
      auto& bn = tape->node(bid);
      const ArrayX<S>& gv = gn.values;
      if (gn.requires_grad)
        for (Eigen::Index c = 0; c < C; ++c)
          gn.grad[c] += (go.col(c).array() * xh.col(c).array()).sum();
      if (bn.requires_grad)
        for (Eigen::Index c = 0; c < C; ++c) bn.grad[c] += go.col(c).sum();
      if (xn.requires_grad) {
        Eigen::Map<MatrixRM<S>> gx(xn.grad.data(), B, C);
        for (Eigen::Index c = 0; c < C; ++c) {
          ArrayX<S> gxh = go.col(c).array() * gv[c];
          if (mode == RunMode::train) {
            const S mg = gxh.sum() / S(B);
            const S mgx = (gxh * xh.col(c).array()).sum() / S(B);
            gx.col(c).array() += inv[c] * (gxh - mg - xh.col(c).array() * mgx);
          } else {
            gx.col(c).array() += inv[c] * gxh;
          }
        }
      }
    };
  }
  return tape->emit(x.shape(), std::move(out), rg, "batch_norm", std::move(bp));
}

// ---------------------------------------------------------------------------
// row-wise log-softmax

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x) {
  Tape<S>* tape = x.tape();
  detail::require_rank2(x, "log_softmax");
  const Eigen::Index R = x.rows(), C = x.cols();
  Eigen::Map<const MatrixRM<S>> xm(x.values().data(), R, C);
  ArrayX<S> out(R * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    const S mx = xm.row(r).maxCoeff();
    ArrayX<S> shifted = xm.row(r).array() - mx;
    const S lse = std::log(shifted.exp().sum());
    om.row(r) = (shifted - lse).matrix();
  }
  const bool rg = x.requires_grad();
  const std::int32_t xid = x.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, xid, oid, R, C]() {
      auto& xn = tape->node(xid);
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), R, C);
      Eigen::Map<const MatrixRM<S>> ov(tape->node(oid).values.data(), R, C);
      Eigen::Map<MatrixRM<S>> gx(xn.grad.data(), R, C);
      for (Eigen::Index r = 0; r < R; ++r) {
        const S gsum = go.row(r).sum();
        gx.row(r).array() += go.row(r).array() - ov.row(r).array().exp() * gsum;
      }
    };
  }
  return tape->emit(x.shape(), std::move(out), rg, "log_softmax", std::move(bp));
}

// ---------------------------------------------------------------------------
// generalized mean over uniform row segments (fused, with learnable exponent)

/// out[g, c] = (mean over the segment's rows of x^p)^(1/p), computed per
/// channel. x must be strictly positive (callers clamp first); p is a
/// 1-element tensor with value >= 1. p == 1 reproduces the arithmetic mean
/// bit-for-bit. The general path factors out the segment-channel max so x^p
/// cannot underflow to zero.
template <typename S>
Tensor<S> gem_segments(const Tensor<S>& x, const Tensor<S>& p, Eigen::Index segment_rows) {
  Tape<S>* tape = x.tape();
  tape->check_same_tape(p, "gem_segments");
  detail::require_rank2(x, "gem_segments");
  if (p.size() != 1) throw ShapeError("gem_segments: p must be a 1-element tensor");
  const S pv = p.values()[0];
  if (!(pv >= S(1))) throw DomainError("gem_segments: p must be >= 1, got " + std::to_string(pv));
  const Eigen::Index R = x.rows(), C = x.cols();
  if (segment_rows <= 0 || R % segment_rows != 0)
    throw ShapeError("gem_segments: rows " + std::to_string(R) + " not divisible by segment " +
                     std::to_string(segment_rows));
  if ((x.values() <= S(0)).any())
    throw DomainError("gem_segments: inputs must be strictly positive (clamp_min first)");
  const Eigen::Index n = segment_rows, G = R / n;

  Eigen::Map<const MatrixRM<S>> xm(x.values().data(), R, C);
  ArrayX<S> out(G * C);
  Eigen::Map<MatrixRM<S>> om(out.data(), G, C);
  if (pv == S(1)) {
    for (Eigen::Index g = 0; g < G; ++g)
      om.row(g) = xm.middleRows(g * n, n).colwise().sum() / S(n);
  } else {
    for (Eigen::Index g = 0; g < G; ++g) {
      for (Eigen::Index c = 0; c < C; ++c) {
        const auto col = xm.block(g * n, c, n, 1).array();
        const S xmax = col.maxCoeff();
        const S mr = (col / xmax).pow(pv).sum() / S(n);
        om(g, c) = xmax * std::pow(mr, S(1) / pv);
      }
    }
  }

  const bool rg = x.requires_grad() || p.requires_grad();
  const std::int32_t xid = x.id(), pid = p.id(), oid = tape->next_id();
  std::function<void()> bp;
  if (rg) {
    bp = [tape, xid, pid, oid, n, G, C, R, pv]() {
      auto& xn = tape->node(xid);
      auto& pn = tape->node(pid);
      Eigen::Map<const MatrixRM<S>> xm(xn.values.data(), R, C);
      Eigen::Map<const MatrixRM<S>> go(tape->node(oid).grad.data(), G, C);
      Eigen::Map<const MatrixRM<S>> ov(tape->node(oid).values.data(), G, C);
      for (Eigen::Index g = 0; g < G; ++g) {
        for (Eigen::Index c = 0; c < C; ++c) {
          const S gup = go(g, c);
          if (gup == S(0)) continue;
          const auto col = xm.block(g * n, c, n, 1).array();
          const S xmax = col.maxCoeff();
          ArrayX<S> r = col / xmax;
          ArrayX<S> rp = r.pow(pv);
          const S mr = rp.sum() / S(n);
          const S outv = ov(g, c);
          if (xn.requires_grad) {
            // d out / d x_i = out * r_i^(p-1) / (n * xmax * mr)
            ArrayX<S> dx = outv * r.pow(pv - S(1)) / (S(n) * xmax * mr);
            Eigen::Map<MatrixRM<S>> gx(xn.grad.data(), R, C);
            gx.block(g * n, c, n, 1).array() += gup * dx;
          }
          if (pn.requires_grad) {
            // d out / d p = out * (-ln(mr)/p^2 + mean(r^p ln r)/(p*mr))
            const S mlog = (rp * r.log()).sum() / S(n);
            pn.grad[0] += gup * outv * (-std::log(mr) / (pv * pv) + mlog / (pv * mr));
          }
        }
      }
    };
  }
  return tape->emit({G, C}, std::move(out), rg, "gem_segments", std::move(bp));
}

}  // namespace xmreid
