#pragma once

// Tape-based reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records nodes in creation order, which is already a
// topological order; backward() sweeps it once in reverse.

#include "m4s/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace m4s {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Shape shape() const { return shape_of(value()); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Per-node adjoints produced by Tape::backward.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}

  const Matrix& operator[](const Var& v) const { return grads_.at(v.id()); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  /// Accumulates the local vector-Jacobian product of node `self` into the
  /// adjoints of its inputs. `grads[self]` holds the upstream adjoint.
  using BackwardFn = std::function<void(const Tape&, std::vector<Matrix>& grads, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a 1x1 output. Nodes not reachable from `output`
  /// (including every node created after it) receive zero adjoints.
  Gradients backward(const Var& output) const;

  /// Test hook: replaces the backward rule of an existing node.
  void override_backward(const Var& v, BackwardFn fn);

 private:
  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace ad {

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (n x c) * row (1 x c) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column means, n x c -> 1 x c.
Var mean_rows(const Var& a);
Var logsumexp(const Var& a);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
Var transpose(const Var& a);

Var softmax_rows(const Var& a);
/// Per-row standardization followed by affine gamma/beta (each 1 x c).
/// Rows with zero variance normalize to the zero row.
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta);

}  // namespace ad

/// Stable log-sum-exp of a plain vector. Throws on empty input.
double logsumexp(const Eigen::Ref<const Vector>& v);

}  // namespace m4s
