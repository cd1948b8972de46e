#include "m4s/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace m4s {
namespace {

double evaluate(const TapeObjective& f, const std::vector<ParamBlock>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
  const Var out = f(tape, leaves);
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check", out.shape(), Shape{1, 1});
  return out.value()(0, 0);
}

std::string coord(const ParamBlock& p, Eigen::Index r, Eigen::Index c) {
  return p.name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

}  // namespace

GradCheckReport grad_check(const TapeObjective& f, const std::vector<ParamBlock>& params, double step, double tol) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
    const Var out = f(tape, leaves);
    if (!std::isfinite(out.value()(0, 0))) throw NumericError("grad_check: objective is non-finite at theta");
    const Gradients g = tape.backward(out);
    for (const Var& v : leaves) analytic.push_back(g[v]);
  }

  GradCheckReport report;
  std::vector<ParamBlock> probe = params;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    Matrix& m = probe[k].value;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + step;
        const double fp = evaluate(f, probe);
        m(r, c) = saved - step;
        const double fm = evaluate(f, probe);
        m(r, c) = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw NumericError("grad_check: non-finite objective probing " + coord(probe[k], r, c));

        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[k](r, c);
        const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
        const double rel = std::abs(a - numeric) / denom;
        ++report.coordinates;
        if (rel > report.max_rel_error || report.worst_row < 0) {
          report.max_rel_error = std::max(rel, report.max_rel_error);
          if (rel >= report.max_rel_error) {
            report.worst_param = probe[k].name;
            report.worst_row = r;
            report.worst_col = c;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
          }
        }
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& theta, double step,
                           double tol) {
  return grad_check([&f](Tape& t, std::span<const Var> leaves) { return f(t, leaves[0]); },
                    std::vector<ParamBlock>{{"theta", theta}}, step, tol);
}

}  // namespace m4s
