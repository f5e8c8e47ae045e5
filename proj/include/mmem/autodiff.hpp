#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every operation of one forward pass; backward() replays them in reverse.
namespace mmem::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Var constant(Matrix value);
  // Leaf whose gradient is reported back under `slot`.
  Var parameter(std::size_t slot, const Matrix& value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }

  // Seeds d(out) and propagates to every parameter leaf.
  void backward(Var out, const Matrix& seed);

  // Adds each parameter leaf's gradient into grads[slot].
  void accumulate_parameter_grads(std::span<Matrix> grads) const;

  std::size_t size() const { return nodes_.size(); }

  // Internal: used by the op implementations.
  Var push(Matrix value, std::vector<std::size_t> inputs,
           std::function<void(Tape&, std::size_t self)> backward);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  // Adds g into the gradient of node id (no-op when it needs none).
  void add_grad(std::size_t id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    long slot = -1;
    std::function<void(Tape&, std::size_t)> backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
// a (n x c) plus a 1 x c row broadcast over rows.
Var add_row(Var a, Var row);
Var relu(Var a);
// Elementwise product with a constant matrix (dropout masks).
Var mul_const(Var a, const Matrix& m);
Var softmax_rows(Var a);
Var transpose(Var a);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var hconcat(std::span<const Var> parts);
// Column means over rows: n x c -> 1 x c.
Var mean_rows(Var a);
// Means over consecutive row segments of length seg_len (last may be shorter).
Var segment_means(Var a, Eigen::Index seg_len);
// alpha * I + beta * a, a square.
Var affine_identity(Var a, double alpha, double beta);
// Initial iterate of the iterative pseudo-inverse:
// a^T / (max_i sum_j |a_ij| * max_j sum_i |a_ij|).
Var pinv_init(Var a);

}  // namespace mmem::ad
