#pragma once

#include "m4s/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace m4s {

struct MetricReport {
  double c_index = 0.5;
  // Concordance restricted to comparable pairs whose later member is censored;
  // absent when no such pair exists.
  std::optional<double> c_index_censored_pairs;
  std::int64_t n_comparable_pairs = 0;
  std::int64_t n_tied_risk_pairs = 0;
  std::int64_t n_censored_pairs = 0;

  std::string to_key_value() const;
  std::string to_json() const;
};

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Harrell's concordance index. A pair (i, j) is comparable when
/// s_i < s_j and subject i had the event; it is concordant when r_i > r_j,
/// and tied risks score one half.
template <typename RiskDerived, typename TimeDerived, typename EventDerived>
MetricReport concordance_index(const Eigen::DenseBase<RiskDerived>& risks, const Eigen::DenseBase<TimeDerived>& times,
                               const Eigen::DenseBase<EventDerived>& events) {
  const Eigen::Index n = risks.size();
  if (times.size() != n || events.size() != n)
    throw ShapeError("concordance_index", Shape{n, 1}, Shape{times.size(), events.size()});
  if (n < 2) throw DegenerateInput("concordance_index: need at least two subjects");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return times.derived()(a) < times.derived()(b); });

  double concordant = 0.0, concordant_cens = 0.0;
  MetricReport rep;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const Eigen::Index i = order[p];
    if (events.derived()(i) == 0) continue;
    const auto ti = times.derived()(i);
    std::size_t q = p + 1;
    while (q < order.size() && !(ti < times.derived()(order[q]))) ++q;
    for (; q < order.size(); ++q) {
      const Eigen::Index j = order[q];
      const auto ri = risks.derived()(i), rj = risks.derived()(j);
      const double score = ri > rj ? 1.0 : (ri == rj ? 0.5 : 0.0);
      ++rep.n_comparable_pairs;
      if (ri == rj) ++rep.n_tied_risk_pairs;
      concordant += score;
      if (events.derived()(j) == 0) {
        ++rep.n_censored_pairs;
        concordant_cens += score;
      }
    }
  }
  if (rep.n_comparable_pairs == 0) throw DegenerateInput("concordance_index: no comparable pairs");
  rep.c_index = concordant / static_cast<double>(rep.n_comparable_pairs);
  if (rep.n_censored_pairs > 0) rep.c_index_censored_pairs = concordant_cens / static_cast<double>(rep.n_censored_pairs);
  return rep;
}

}  // namespace m4s
