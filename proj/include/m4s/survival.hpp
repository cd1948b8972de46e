#pragma once

// Cox partial likelihood, Breslow baseline hazard, Kaplan-Meier estimation
// and risk stratification. Risk sets follow the standard convention
// R(t) = {j : s_j >= t}; tied times share one risk set (Breslow ties).

#include "m4s/autodiff.hpp"
#include "m4s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string_view>
#include <vector>

namespace m4s {

namespace detail {

template <typename TimeDerived>
std::vector<Eigen::Index> order_by_time(const Eigen::DenseBase<TimeDerived>& times) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(times.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return times.derived()(a) < times.derived()(b); });
  return order;
}

inline void check_aligned(const char* op, Eigen::Index n, Eigen::Index times, Eigen::Index events) {
  if (times != n || events != n) throw ShapeError(op, Shape{n, 1}, Shape{times, events});
}

// Running log-sum-exp accumulator.
template <typename Scalar>
struct LogSumExpAcc {
  Scalar max = -std::numeric_limits<Scalar>::infinity();
  Scalar sum = 0;

  void add(Scalar x) {
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + Scalar(1);
      max = x;
    }
  }
  Scalar value() const { return max + std::log(sum); }
};

}  // namespace detail

/// Negative Cox log partial likelihood and its gradient w.r.t. the risks.
template <typename Scalar>
struct CoxLoss {
  Scalar value = 0;
  VectorT<Scalar> gradient;
};

/// -sum_{i: E_i = 1} [ r_i - log sum_{j: s_j >= s_i} exp(r_j) ]. Zero events
/// give 0. O(n log n).
template <typename RiskDerived, typename TimeDerived, typename EventDerived>
CoxLoss<typename RiskDerived::Scalar> cox_ranking_loss_with_gradient(const Eigen::DenseBase<RiskDerived>& risks,
                                                                     const Eigen::DenseBase<TimeDerived>& times,
                                                                     const Eigen::DenseBase<EventDerived>& events) {
  using Scalar = typename RiskDerived::Scalar;
  const Eigen::Index n = risks.size();
  detail::check_aligned("cox_ranking_loss", n, times.size(), events.size());
  const auto& r = risks.derived();
  const auto& s = times.derived();
  const auto& e = events.derived();

  CoxLoss<Scalar> out;
  out.gradient = VectorT<Scalar>::Zero(n);
  if (n == 0) return out;

  const std::vector<Eigen::Index> asc = detail::order_by_time(times);
  // Tie groups in ascending time: [group_begin[g], group_begin[g+1]).
  std::vector<std::size_t> group_begin;
  for (std::size_t p = 0; p < asc.size(); ++p)
    if (p == 0 || s(asc[p - 1]) < s(asc[p])) group_begin.push_back(p);
  group_begin.push_back(asc.size());
  const std::size_t groups = group_begin.size() - 1;

  // Descending sweep: log-denominator of each group's risk set.
  std::vector<Scalar> log_den(groups);
  detail::LogSumExpAcc<Scalar> acc;
  for (std::size_t g = groups; g-- > 0;) {
    for (std::size_t p = group_begin[g]; p < group_begin[g + 1]; ++p) acc.add(r(asc[p]));
    log_den[g] = acc.value();
  }

  // Ascending sweep: log sum over events i with s_i <= s_k of exp(-log_den_i).
  detail::LogSumExpAcc<Scalar> inv;
  Scalar loss = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t p = group_begin[g]; p < group_begin[g + 1]; ++p) {
      const Eigen::Index i = asc[p];
      if (e(i) != 0) {
        loss -= r(i) - log_den[g];
        inv.add(-log_den[g]);
      }
    }
    for (std::size_t p = group_begin[g]; p < group_begin[g + 1]; ++p) {
      const Eigen::Index k = asc[p];
      Scalar grad = e(k) != 0 ? Scalar(-1) : Scalar(0);
      if (inv.sum > 0) grad += std::exp(r(k) + inv.value());
      out.gradient(k) = grad;
    }
  }
  out.value = loss;
  return out;
}

template <typename RiskDerived, typename TimeDerived, typename EventDerived>
typename RiskDerived::Scalar cox_ranking_loss(const Eigen::DenseBase<RiskDerived>& risks,
                                              const Eigen::DenseBase<TimeDerived>& times,
                                              const Eigen::DenseBase<EventDerived>& events) {
  return cox_ranking_loss_with_gradient(risks, times, events).value;
}

namespace ad {
/// Cox loss as a tape node over an n x 1 risk column.
Var cox_ranking_loss(const Var& risks, const Vector& times, const IntVector& events);
}  // namespace ad

/// Right-continuous cumulative baseline hazard H_0 as a step function.
struct BaselineHazard {
  Vector event_times;  // strictly increasing
  Vector cumulative;   // H_0 at each event time

  double at(double t) const {
    const auto* begin = event_times.data();
    const auto* end = begin + event_times.size();
    const auto* it = std::upper_bound(begin, end, t);
    return it == begin ? 0.0 : cumulative(it - begin - 1);
  }
};

class NoEventsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Breslow estimator: increment d_k / sum_{s_j >= t_k} exp(r_j) at each
/// distinct event time.
template <typename RiskDerived, typename TimeDerived, typename EventDerived>
BaselineHazard breslow_baseline(const Eigen::DenseBase<RiskDerived>& risks, const Eigen::DenseBase<TimeDerived>& times,
                                const Eigen::DenseBase<EventDerived>& events) {
  const Eigen::Index n = risks.size();
  detail::check_aligned("breslow_baseline", n, times.size(), events.size());
  const auto& r = risks.derived();
  const auto& s = times.derived();
  const auto& e = events.derived();

  const std::vector<Eigen::Index> asc = detail::order_by_time(times);
  std::vector<double> at_risk(asc.size());
  double acc = 0.0;
  for (std::size_t p = asc.size(); p-- > 0;) {
    acc += std::exp(static_cast<double>(r(asc[p])));
    at_risk[p] = acc;
  }

  std::vector<double> t_out, h_out;
  double cum = 0.0;
  for (std::size_t p = 0; p < asc.size();) {
    std::size_t q = p;
    int deaths = 0;
    while (q < asc.size() && s(asc[q]) == s(asc[p])) {
      deaths += e(asc[q]) != 0 ? 1 : 0;
      ++q;
    }
    if (deaths > 0) {
      cum += static_cast<double>(deaths) / at_risk[p];
      t_out.push_back(static_cast<double>(s(asc[p])));
      h_out.push_back(cum);
    }
    p = q;
  }
  if (t_out.empty()) throw NoEventsError("breslow_baseline: no events, baseline hazard is not identifiable");
  return {to_vector(t_out), to_vector(h_out)};
}

/// S(t | r) = exp(-H_0(t) exp(r)).
inline double survival_function(const BaselineHazard& h, double risk, double t) {
  return std::exp(-h.at(t) * std::exp(risk));
}

/// Step curve; value(t) is the value at the last knot <= t. Survival
/// curves start with the knot (0, 1).
struct StepCurve {
  Vector times;
  Vector values;

  double at(double t) const {
    const auto* begin = times.data();
    const auto* end = begin + times.size();
    const auto* it = std::upper_bound(begin, end, t);
    return it == begin ? 1.0 : values(it - begin - 1);
  }
};

/// Product-limit estimator. Knots: (0, 1), each distinct event time, and a
/// trailing flat knot at the last follow-up time when it exceeds the last
/// event time. Deaths are processed before censorings at the same time.
template <typename TimeDerived, typename EventDerived>
StepCurve kaplan_meier(const Eigen::DenseBase<TimeDerived>& times, const Eigen::DenseBase<EventDerived>& events) {
  const Eigen::Index n = times.size();
  detail::check_aligned("kaplan_meier", n, times.size(), events.size());
  const auto& s = times.derived();
  const auto& e = events.derived();
  const std::vector<Eigen::Index> asc = detail::order_by_time(times);

  std::vector<double> t_out{0.0}, v_out{1.0};
  double surv = 1.0;
  for (std::size_t p = 0; p < asc.size();) {
    std::size_t q = p;
    int deaths = 0;
    while (q < asc.size() && s(asc[q]) == s(asc[p])) {
      deaths += e(asc[q]) != 0 ? 1 : 0;
      ++q;
    }
    if (deaths > 0) {
      const double at_risk = static_cast<double>(asc.size() - p);
      surv *= 1.0 - static_cast<double>(deaths) / at_risk;
      t_out.push_back(static_cast<double>(s(asc[p])));
      v_out.push_back(surv);
    }
    p = q;
  }
  if (n > 0) {
    const double last = static_cast<double>(s(asc.back()));
    if (last > t_out.back()) {
      t_out.push_back(last);
      v_out.push_back(surv);
    }
  }
  return {to_vector(t_out), to_vector(v_out)};
}

/// Linear-interpolation percentile between order statistics,
/// position (n - 1) * q.
template <typename Derived>
double percentile(const Eigen::DenseBase<Derived>& values, double q) {
  const Eigen::Index n = values.size();
  if (n == 0) throw std::invalid_argument("percentile: empty input");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(values.derived()(i));
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

enum class RiskStratum : int { Low = 0, Mid = 1, High = 2 };

std::string_view stratum_name(RiskStratum s);

inline constexpr double kLowerTertile = 0.33;
inline constexpr double kUpperTertile = 0.66;

/// risk <= p33 -> Low; p33 < risk <= p66 -> Mid; otherwise High.
template <typename Derived>
std::vector<RiskStratum> stratify_tertiles(const Eigen::DenseBase<Derived>& risks) {
  if (risks.size() < 3) throw std::invalid_argument("stratify_tertiles: need at least 3 subjects");
  const double p33 = percentile(risks, kLowerTertile);
  const double p66 = percentile(risks, kUpperTertile);
  std::vector<RiskStratum> out(static_cast<std::size_t>(risks.size()));
  for (Eigen::Index i = 0; i < risks.size(); ++i) {
    const double r = static_cast<double>(risks.derived()(i));
    out[static_cast<std::size_t>(i)] = r <= p33 ? RiskStratum::Low : (r <= p66 ? RiskStratum::Mid : RiskStratum::High);
  }
  return out;
}

/// Two-group view: risk <= median -> Low, otherwise High.
template <typename Derived>
std::vector<RiskStratum> stratify_median(const Eigen::DenseBase<Derived>& risks) {
  if (risks.size() < 2) throw std::invalid_argument("stratify_median: need at least 2 subjects");
  const double med = percentile(risks, 0.5);
  std::vector<RiskStratum> out(static_cast<std::size_t>(risks.size()));
  for (Eigen::Index i = 0; i < risks.size(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<double>(risks.derived()(i)) <= med ? RiskStratum::Low : RiskStratum::High;
  return out;
}

}  // namespace m4s
