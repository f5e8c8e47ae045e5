#include "mmem/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mmem/error.hpp"

namespace mmem::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(std::size_t slot, const Matrix& value) {
  Node n;
  n.value = value;
  n.needs_grad = true;
  n.slot = static_cast<long>(slot);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::vector<std::size_t> inputs,
               std::function<void(Tape&, std::size_t)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                             [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::add_grad(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var out, const Matrix& seed) {
  if (seed.rows() != value(out).rows() || seed.cols() != value(out).cols()) {
    throw PreconditionError("autodiff: seed shape differs from output shape");
  }
  add_grad(out.id, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

void Tape::accumulate_parameter_grads(std::span<Matrix> grads) const {
  for (const auto& n : nodes_) {
    if (n.slot < 0 || n.grad.size() == 0) continue;
    grads[static_cast<std::size_t>(n.slot)] += n.grad;
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw PreconditionError("autodiff: operands live on different tapes");
  return *a.tape;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw PreconditionError("autodiff: matmul shape mismatch");
  return t.push(a.value() * b.value(), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    const Matrix& g = t.grad(s);
    if (t.needs_grad(a)) t.add_grad(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.add_grad(b, t.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.push(a.value() + b.value(), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s));
    t.add_grad(b, t.grad(s));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.push(a.value() - b.value(), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s));
    if (t.needs_grad(b)) t.add_grad(b, -t.grad(s));
  });
}

Var scale(Var a, double k) {
  return a.tape->push(a.value() * k, {a.id}, [a = a.id, k](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s) * k);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw PreconditionError("autodiff: add_row shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(v), {a.id, row.id}, [a = a.id, r = row.id](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s));
    if (t.needs_grad(r)) t.add_grad(r, t.grad(s).colwise().sum());
  });
}

Var relu(Var a) {
  return a.tape->push(a.value().cwiseMax(0.0), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    t.add_grad(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(t.grad(s)));
  });
}

Var mul_const(Var a, const Matrix& m) {
  if (m.rows() != a.rows() || m.cols() != a.cols()) throw PreconditionError("autodiff: mask shape mismatch");
  return a.tape->push(a.value().cwiseProduct(m), {a.id}, [a = a.id, m](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s).cwiseProduct(m));
  });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return a.tape->push(std::move(y), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    const Matrix& y = t.value(s);
    const Matrix& g = t.grad(s);
    const Eigen::VectorXd dot = y.cwiseProduct(g).rowwise().sum();
    t.add_grad(a, y.cwiseProduct(g.colwise() - dot));
  });
}

Var transpose(Var a) {
  return a.tape->push(a.value().transpose(), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    t.add_grad(a, t.grad(s).transpose());
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw PreconditionError("autodiff: slice out of range");
  return a.tape->push(a.value().middleCols(start, count), {a.id},
                      [a = a.id, start, count](Tape& t, std::size_t s) {
                        Matrix g = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
                        g.middleCols(start, count) = t.grad(s);
                        t.add_grad(a, g);
                      });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw PreconditionError("autodiff: hconcat of nothing");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw PreconditionError("autodiff: hconcat row mismatch");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix v(parts.front().rows(), cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.push(std::move(v), ids, [ids](Tape& t, std::size_t s) {
    Eigen::Index off = 0;
    for (auto id : ids) {
      const Eigen::Index c = t.value(id).cols();
      t.add_grad(id, t.grad(s).middleCols(off, c));
      off += c;
    }
  });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  return a.tape->push(a.value().colwise().mean(), {a.id}, [a = a.id, n](Tape& t, std::size_t s) {
    const Eigen::Index rows = t.value(a).rows();
    t.add_grad(a, (t.grad(s) / n).replicate(rows, 1));
  });
}

Var segment_means(Var a, Eigen::Index seg_len) {
  if (seg_len < 1) throw PreconditionError("autodiff: segment length must be positive");
  const Eigen::Index n = a.rows();
  const Eigen::Index segs = (n + seg_len - 1) / seg_len;
  Matrix v(segs, a.cols());
  for (Eigen::Index j = 0; j < segs; ++j) {
    const Eigen::Index start = j * seg_len;
    const Eigen::Index len = std::min(seg_len, n - start);
    v.row(j) = a.value().middleRows(start, len).colwise().mean();
  }
  return a.tape->push(std::move(v), {a.id}, [a = a.id, seg_len, n, segs](Tape& t, std::size_t s) {
    Matrix g(n, t.value(a).cols());
    for (Eigen::Index j = 0; j < segs; ++j) {
      const Eigen::Index start = j * seg_len;
      const Eigen::Index len = std::min(seg_len, n - start);
      g.middleRows(start, len) = (t.grad(s).row(j) / static_cast<double>(len)).replicate(len, 1);
    }
    t.add_grad(a, g);
  });
}

Var affine_identity(Var a, double alpha, double beta) {
  if (a.rows() != a.cols()) throw PreconditionError("autodiff: affine_identity needs a square matrix");
  Matrix v = beta * a.value();
  v.diagonal().array() += alpha;
  return a.tape->push(std::move(v), {a.id}, [a = a.id, beta](Tape& t, std::size_t s) {
    t.add_grad(a, beta * t.grad(s));
  });
}

Var pinv_init(Var a) {
  const Matrix& x = a.value();
  const Matrix ax = x.cwiseAbs();
  Eigen::Index row_arg = 0, col_arg = 0;
  const double row_max = ax.rowwise().sum().maxCoeff(&row_arg);
  const double col_max = ax.colwise().sum().maxCoeff(&col_arg);
  const double denom = row_max * col_max;
  if (!(denom > 0.0)) throw PreconditionError("autodiff: pinv_init of a zero matrix");
  return a.tape->push(x.transpose() / denom, {a.id},
                      [a = a.id, row_arg, col_arg, row_max, col_max, denom](Tape& t, std::size_t s) {
                        const Matrix& x = t.value(a);
                        const Matrix& g = t.grad(s);
                        // Direct term through x^T.
                        Matrix dx = g.transpose() / denom;
                        // Through the scalar normalizer 1 / (r c).
                        const double dscalar = (g.cwiseProduct(x.transpose())).sum();
                        const double dinv = -dscalar / (denom * denom);
                        const Matrix sgn = x.unaryExpr([](double v) {
                          return static_cast<double>((v > 0.0) - (v < 0.0));
                        });
                        dx.row(row_arg) += dinv * col_max * sgn.row(row_arg);
                        dx.col(col_arg) += dinv * row_max * sgn.col(col_arg);
                        t.add_grad(a, dx);
                      });
}

}  // namespace mmem::ad
