#pragma once

// Differentiable primitives. Each returns a new Var on the operands' tape and
// registers the vector-Jacobian product for the reverse sweep.

#include "pourmon/numcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace pourmon::nc {

/// Probabilities are clamped to this range before any log.
inline constexpr double kProbFloor = 1e-12;

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a.valid() || a.tape() != b.tape())
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

template <typename Scalar>
void accumulate(Tape<Scalar>& t, int id, const Mat<Scalar>& g) {
  if (t.requires_grad(id)) t.grad_ref(id) += g;
}

}  // namespace detail

/// Elementwise a + b. A column vector b is broadcast across the columns of a.
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::same_tape("add", a, b);
  const int ia = a.id(), ib = b.id();
  if (b.cols() == 1 && a.cols() > 1 && a.rows() == b.rows()) {
    Mat<Scalar> out = a.value().colwise() + b.value().col(0);
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
      detail::accumulate(t, ia, g);
      if (t.requires_grad(ib)) t.grad_ref(ib) += g.rowwise().sum();
    });
  }
  detail::require_same_shape("add", a, b);
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    detail::accumulate(t, ia, g);
    detail::accumulate(t, ib, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    detail::accumulate(t, ia, g);
    if (t.requires_grad(ib)) t.grad_ref(ib) -= g;
  });
}

/// Hadamard product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib},
                  [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
                    if (t.requires_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
                  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar c) {
  const int ix = x.id();
  return x.tape()->record(x.value() * c, {ix}, [ix, c](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.grad_ref(ix) += g * c;
  });
}

/// x + c for a scalar constant c.
template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& x, Scalar c) {
  const int ix = x.id();
  Mat<Scalar> out = x.value().array() + c;
  return x.tape()->record(std::move(out), {ix},
                          [ix](Tape<Scalar>& t, const Mat<Scalar>& g) { t.grad_ref(ix) += g; });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::same_tape("matmul", a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ " + a.shape() + " * " + b.shape());
  const int ia = a.id(), ib = b.id();
  Mat<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& t, const Mat<Scalar>& g) {
    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
  });
}

/// Stacks operands vertically; all must share the column count.
template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  auto* tp = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    if (p.tape() != tp) throw std::invalid_argument("concat_rows: operands live on different tapes");
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + parts.front().shape() + " vs " + p.shape());
    offsets.push_back(rows);
    rows += p.rows();
    ids.push_back(p.id());
  }
  Mat<Scalar> out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k)
    out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  return tp->record(std::move(out), ids, [ids, offsets](Tape<Scalar>& t, const Mat<Scalar>& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.grad_ref(ids[k]) += g.middleRows(offsets[k], t.value(ids[k]).rows());
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts) {
  return concat_rows(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count <= 0 || start + count > x.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of " + x.shape());
  const int ix = x.id();
  return x.tape()->record(x.value().middleRows(start, count), {ix},
                          [ix, start, count](Tape<Scalar>& t, const Mat<Scalar>& g) {
                            t.grad_ref(ix).middleRows(start, count) += g;
                          });
}

/// Generic elementwise map y = f(x) with caller-supplied derivative df(x, y).
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, F f, DF df) {
  const int ix = x.id();
  auto& tape = *x.tape();
  const int io = static_cast<int>(tape.size());
  Mat<Scalar> out = x.value().unaryExpr(f);
  return tape.record(std::move(out), {ix}, [ix, io, df](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& in = t.value(ix);
    const auto& y = t.value(io);
    auto& gi = t.grad_ref(ix);
    for (Eigen::Index k = 0; k < in.size(); ++k) gi(k) += g(k) * df(in(k), y(k));
  });
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar v) {
  if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary(x, [](Scalar v) { return sigmoid_scalar(v); },
               [](Scalar, Scalar s) { return s * (Scalar(1) - s); });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return unary(x, [](Scalar v) { return std::tanh(v); },
               [](Scalar, Scalar th) { return Scalar(1) - th * th; });
}

template <typename Scalar>
Var<Scalar> cos(const Var<Scalar>& x) {
  return unary(x, [](Scalar v) { return std::cos(v); }, [](Scalar v, Scalar) { return -std::sin(v); });
}

template <typename Scalar>
Var<Scalar> sin(const Var<Scalar>& x) {
  return unary(x, [](Scalar v) { return std::sin(v); }, [](Scalar v, Scalar) { return std::cos(v); });
}

/// log(clamp(x, 1e-12, 1 - 1e-12)); zero derivative where the clamp is active.
template <typename Scalar>
Var<Scalar> clamped_log(const Var<Scalar>& x) {
  static constexpr Scalar lo = Scalar(kProbFloor);
  static constexpr Scalar hi = Scalar(1) - Scalar(kProbFloor);
  return unary(x, [](Scalar v) { return std::log(std::clamp(v, lo, hi)); },
               [](Scalar v, Scalar) { return (v < lo || v > hi) ? Scalar(0) : Scalar(1) / v; });
}

/// Column-wise softmax.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x) {
  const int ix = x.id();
  Mat<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.value().col(c);
    const Scalar m = col.maxCoeff();
    out.col(c) = (col.array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  auto& t = *x.tape();
  const int io = static_cast<int>(t.size());
  return t.record(std::move(out), {ix}, [ix, io](Tape<Scalar>& t, const Mat<Scalar>& g) {
    const auto& s = t.value(io);
    // dx = s * (g - <s, g>) per column
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dots = s.cwiseProduct(g).colwise().sum();
    Mat<Scalar> centered = g.rowwise() - dots;
    t.grad_ref(ix) += s.cwiseProduct(centered);
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const int ix = x.id();
  Mat<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.grad_ref(ix).array() += g(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const int ix = x.id();
  const Scalar n = static_cast<Scalar>(x.value().size());
  Mat<Scalar> out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return x.tape()->record(std::move(out), {ix}, [ix, n](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.grad_ref(ix).array() += g(0, 0) / n;
  });
}

/// Sums each column: [r x c] -> [1 x c].
template <typename Scalar>
Var<Scalar> sum_rows(const Var<Scalar>& x) {
  const int ix = x.id();
  return x.tape()->record(x.value().colwise().sum(), {ix}, [ix](Tape<Scalar>& t, const Mat<Scalar>& g) {
    t.grad_ref(ix).rowwise() += g.row(0);
  });
}

}  // namespace pourmon::nc
