#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace m4s {

// Dense storage is row-major double throughout; everything rank <= 2.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using RowVector = RowVectorT<double>;
using IntVector = Eigen::VectorXi;

using Tensor = Matrix;

struct Shape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

template <typename Derived>
Shape shape_of(const Eigen::DenseBase<Derived>& m) {
  return {m.rows(), m.cols()};
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b)
      : std::invalid_argument(op + ": shape mismatch " + a.str() + " vs " + b.str()),
        op_(op),
        lhs_(a),
        rhs_(b) {}

  const std::string& op() const noexcept { return op_; }
  Shape lhs() const noexcept { return lhs_; }
  Shape rhs() const noexcept { return rhs_; }

 private:
  std::string op_;
  Shape lhs_;
  Shape rhs_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Eigen::Ref<const Vector>& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace m4s
