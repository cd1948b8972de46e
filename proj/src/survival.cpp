#include "m4s/survival.hpp"

namespace m4s {

std::string_view stratum_name(RiskStratum s) {
  switch (s) {
    case RiskStratum::Low: return "low";
    case RiskStratum::Mid: return "mid";
    case RiskStratum::High: return "high";
  }
  return "?";
}

namespace ad {

Var cox_ranking_loss(const Var& risks, const Vector& times, const IntVector& events) {
  if (risks.cols() != 1 || risks.rows() != times.size() || times.size() != events.size())
    throw ShapeError("cox_ranking_loss", risks.shape(), Shape{times.size(), 1});
  const Vector r = risks.value().col(0);
  auto loss = cox_ranking_loss_with_gradient(r, times, events);
  Matrix out(1, 1);
  out(0, 0) = loss.value;
  const std::size_t ir = risks.id();
  return risks.tape()->push(std::move(out), {ir},
                            [ir, grad = std::move(loss.gradient)](const Tape&, std::vector<Matrix>& g, std::size_t self) {
                              g[ir].col(0) += g[self](0, 0) * grad;
                            });
}

}  // namespace ad
}  // namespace m4s
