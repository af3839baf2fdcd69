#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// Every tensor is a rank-2 matrix (rows x cols); vectors are single columns and
// scalars are 1x1. A batch of B samples is carried as B columns. Primitive
// results are appended to a Tape; backward() walks the records once in reverse.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pourmon::nc {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Named trainable matrix living outside any tape.
template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
};

template <typename Scalar>
using GradientMap = std::map<std::string, Mat<Scalar>>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << '[' << rows << 'x' << cols << ']';
  return os.str();
}

template <typename Scalar>
class Tape;

/// Handle to one tensor recorded on a tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  const Mat<Scalar>& value() const { return tape_->value(id_); }
  const Mat<Scalar>& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::string shape() const { return shape_str(rows(), cols()); }
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar " + shape());
    return value()(0, 0);
  }

  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  /// Receives the tape and the output gradient; accumulates into input grads.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) { return push(std::move(value), false, {}, nullptr); }

  Var<Scalar> variable(Matrix value) { return push(std::move(value), true, {}, nullptr); }

  /// Leaf tracked by parameter name; repeated calls return the same leaf.
  Var<Scalar> param(const Parameter<Scalar>& p) {
    if (auto it = param_leaf_.find(&p); it != param_leaf_.end()) return {this, it->second};
    auto v = push(p.value, true, {}, nullptr);
    param_leaf_.emplace(&p, v.id());
    params_.emplace_back(&p, v.id());
    return v;
  }

  /// Parameter value entered without gradient tracking.
  Var<Scalar> frozen(const Parameter<Scalar>& p) { return constant(p.value); }

  Var<Scalar> stop_gradient(const Var<Scalar>& x) { return constant(x.value()); }

  /// Appends a primitive result. requires_grad propagates from the inputs.
  Var<Scalar> record(Matrix value, std::vector<int> inputs, BackwardFn fn) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), needs, std::move(inputs), needs ? std::move(fn) : BackwardFn{});
  }

  /// Reverse sweep from a scalar loss. Returns gradients of every parameter
  /// leaf on the tape (zero when unreachable).
  GradientMap<Scalar> backward(const Var<Scalar>& loss) {
    if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (loss.rows() != 1 || loss.cols() != 1)
      throw ShapeError("backward: loss must be scalar, got " + loss.shape());
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    }
    if (nodes_[loss.id()].requires_grad) nodes_[loss.id()].grad(0, 0) = Scalar(1);

    visits_ = 0;
    for (int k = static_cast<int>(nodes_.size()) - 1; k >= 0; --k) {
      ++visits_;
      auto& n = nodes_[k];
      if (n.backward && k <= loss.id()) n.backward(*this, n.grad);
    }

    GradientMap<Scalar> out;
    for (const auto& [p, id] : params_) {
      auto [it, fresh] = out.try_emplace(p->name, nodes_[id].grad);
      if (!fresh) it->second += nodes_[id].grad;
    }
    return out;
  }

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  Matrix& grad_ref(int id) { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  Var<Scalar> push(Matrix value, bool requires_grad, std::vector<int> inputs, BackwardFn fn) {
    if (!value.allFinite()) {
      throw NonFiniteError("non-finite value produced at record " + std::to_string(nodes_.size()) +
                           " " + shape_str(value.rows(), value.cols()));
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, int> param_leaf_;
  std::vector<std::pair<const Parameter<Scalar>*, int>> params_;
  std::size_t visits_ = 0;
};

}  // namespace pourmon::nc
