#include "m4s/autodiff.hpp"

#include <cmath>
#include <limits>

namespace m4s {

Var Tape::leaf(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::push(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& output) const {
  if (output.tape() != this) throw std::invalid_argument("backward: output belongs to another tape");
  if (output.rows() != 1 || output.cols() != 1)
    throw ShapeError("backward", output.shape(), Shape{1, 1});

  std::vector<Matrix> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  grads[output.id()](0, 0) = 1.0;

  std::vector<char> live(nodes_.size(), 0);
  live[output.id()] = 1;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    if (!live[i]) continue;
    const Node& node = nodes_[i];
    if (!node.backward) continue;
    node.backward(*this, grads, i);
    for (std::size_t in : node.inputs) live[in] = 1;
  }
  return Gradients(std::move(grads));
}

void Tape::override_backward(const Var& v, BackwardFn fn) { nodes_.at(v.id()).backward = std::move(fn); }

double logsumexp(const Eigen::Ref<const Vector>& v) {
  if (v.size() == 0) throw std::invalid_argument("logsumexp: empty input");
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

namespace ad {
namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: uninitialized Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("autodiff: operands live on different tapes");
  return t;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_row_broadcast(const char* op, const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError(op, a.shape(), row.shape());
}

// Elementwise unary op whose derivative is a function of input and output.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(fwd(a.value()), {ia}, [ia, deriv](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    g[ia].array() += g[self].array() * deriv(tp.value(ia), tp.value(self)).array();
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {ia, ib}, [ia, ib](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    g[ia].noalias() += g[self] * tp.value(ib).transpose();
    g[ib].noalias() += tp.value(ia).transpose() * g[self];
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self];
    g[ib] += g[self];
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self];
    g[ib] -= g[self];
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("mul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), {ia, ib}, [ia, ib](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self].cwiseProduct(tp.value(ib));
    g[ib] += g[self].cwiseProduct(tp.value(ia));
  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  require_row_broadcast("add_row", a, row);
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {ia, ir}, [ia, ir](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self];
    g[ir] += g[self].colwise().sum();
  });
}

Var mul_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  require_row_broadcast("mul_row", a, row);
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(std::move(out), {ia, ir}, [ia, ir](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    g[ia].array() += g[self].array().rowwise() * tp.value(ir).row(0).array();
    g[ir] += g[self].cwiseProduct(tp.value(ia)).colwise().sum();
  });
}

Var scale(const Var& a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value() * c, {ia}, [ia, c](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += c * g[self];
  });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out = a.value().array() + c;
  return t.push(std::move(out), {ia}, [ia](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self];
  });
}

Var relu(const Var& a) {
  // Subgradient at exactly 0 is 0.
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.cwiseMax(0.0); },
      [](const Matrix& x, const Matrix&) -> Matrix { return (x.array() > 0.0).cast<double>().matrix(); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh().matrix(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return (1.0 - y.array().square()).matrix(); });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](const Matrix& x) -> Matrix {
        return x.unaryExpr([](double v) {
          if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
          const double e = std::exp(v);
          return e / (1.0 + e);
        });
      },
      [](const Matrix&, const Matrix& y) -> Matrix { return (y.array() * (1.0 - y.array())).matrix(); });
}

Var exp(const Var& a) {
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().exp().matrix(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return y; });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw std::domain_error("log: non-positive input");
  return unary(
      a, [](const Matrix& x) -> Matrix { return x.array().log().matrix(); },
      [](const Matrix& x, const Matrix&) -> Matrix { return x.array().inverse().matrix(); });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {ia}, [ia](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia].array() += g[self](0, 0);
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
  Tape& t = tape_of(a);
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  const std::size_t ia = a.id();
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() * inv;
  return t.push(std::move(out), {ia}, [ia, inv](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia].rowwise() += g[self].row(0) * inv;
  });
}

Var logsumexp(const Var& a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.size() == 0) throw std::invalid_argument("logsumexp: empty input");
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = m4s::logsumexp(Eigen::Map<const Vector>(x.data(), x.size()));
  return t.push(std::move(out), {ia}, [ia](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    const double lse = tp.value(self)(0, 0);
    g[ia].array() += g[self](0, 0) * (tp.value(ia).array() - lse).exp();
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.cols() != cols) throw ShapeError("concat_rows", parts.front().shape(), p.shape());
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  return t.push(std::move(out), ids, [ids, offsets](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    for (std::size_t k = 0; k < ids.size(); ++k) g[ids[k]] += g[self].middleRows(offsets[k], g[ids[k]].rows());
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols", parts.front().shape(), p.shape());
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) out.middleCols(offsets[k], parts[k].cols()) = parts[k].value();
  return t.push(std::move(out), ids, [ids, offsets](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    for (std::size_t k = 0; k < ids.size(); ++k) g[ids[k]] += g[self].middleCols(offsets[k], g[ids[k]].cols());
  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw ShapeError("slice_rows", a.shape(), Shape{begin + count, a.cols()});
  const std::size_t ia = a.id();
  return t.push(a.value().middleRows(begin, count), {ia},
                [ia, begin, count](const Tape&, std::vector<Matrix>& g, std::size_t self) {
                  g[ia].middleRows(begin, count) += g[self];
                });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw ShapeError("slice_cols", a.shape(), Shape{a.rows(), begin + count});
  const std::size_t ia = a.id();
  return t.push(a.value().middleCols(begin, count), {ia},
                [ia, begin, count](const Tape&, std::vector<Matrix>& g, std::size_t self) {
                  g[ia].middleCols(begin, count) += g[self];
                });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value().transpose(), {ia}, [ia](const Tape&, std::vector<Matrix>& g, std::size_t self) {
    g[ia] += g[self].transpose();
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), {ia}, [ia](const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
    const Matrix& s = tp.value(self);
    const Matrix& up = g[self];
    const Vector dots = up.cwiseProduct(s).rowwise().sum();
    g[ia].array() += s.array() * (up.colwise() - dots).array();
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta) {
  Tape& t = tape_of(a, gamma);
  tape_of(a, beta);
  require_row_broadcast("layer_norm_rows", a, gamma);
  require_row_broadcast("layer_norm_rows", a, beta);

  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix normed = Matrix::Zero(x.rows(), n);
  Vector inv_std = Vector::Zero(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    // Degenerate rows stay zero; sqrt(1e-24) sits far below any real token spread.
    if (var > 1e-24) {
      inv_std(r) = 1.0 / std::sqrt(var);
      normed.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
  }
  Matrix out = (normed.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();

  const std::size_t ia = a.id(), ig = gamma.id(), ib = beta.id();
  return t.push(std::move(out), {ia, ig, ib},
                [ia, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std), n](
                    const Tape& tp, std::vector<Matrix>& g, std::size_t self) {
                  const Matrix& up = g[self];
                  g[ig] += up.cwiseProduct(normed).colwise().sum();
                  g[ib] += up.colwise().sum();
                  const Matrix gn = up.array().rowwise() * tp.value(ig).row(0).array();
                  for (Eigen::Index r = 0; r < gn.rows(); ++r) {
                    if (inv_std(r) == 0.0) continue;
                    const double mg = gn.row(r).sum() / static_cast<double>(n);
                    const double mgx = gn.row(r).dot(normed.row(r)) / static_cast<double>(n);
                    g[ia].row(r).array() += inv_std(r) * (gn.row(r).array() - mg - normed.row(r).array() * mgx);
                  }
                });
}

}  // namespace ad
}  // namespace m4s
