#pragma once

#include "m4s/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace m4s {

/// Named parameter block checked by grad_check.
struct ParamBlock {
  std::string name;
  Matrix value;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  // Coordinate of the worst disagreement.
  std::string worst_param;
  Eigen::Index worst_row = -1;
  Eigen::Index worst_col = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Scalar objective over tape leaves, one leaf per parameter block in order.
using TapeObjective = std::function<Var(Tape&, std::span<const Var>)>;

// Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor); the floor keeps
// coordinates whose true derivative is ~0 from dominating on rounding noise.
inline constexpr double kGradCheckFloor = 1e-3;

/// Compares reverse-mode gradients of `f` against central differences with
/// the given step, coordinate by coordinate. Throws NumericError naming the
/// coordinate when `f` is non-finite at a probe point.
GradCheckReport grad_check(const TapeObjective& f, const std::vector<ParamBlock>& params, double step, double tol);

/// Single-tensor convenience overload.
GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& theta, double step,
                           double tol);

}  // namespace m4s
