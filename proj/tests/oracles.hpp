#pragma once

// Independent reference implementations. Each one is written the slow,
// obvious way (explicit loops, explicit risk sets, explicit pair lists) so
// that it shares no code path with the library routine it checks.

#include "m4s/adapters.hpp"
#include "m4s/encoders.hpp"
#include "m4s/evaluation.hpp"
#include "m4s/survival.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using m4s::IntVector;
using m4s::Matrix;
using m4s::Vector;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Partial likelihood with every risk set materialized.
inline double cox_loss(const Vector& r, const Vector& s, const IntVector& e) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!e(i)) continue;
    std::vector<double> risk_set;
    for (Eigen::Index j = 0; j < r.size(); ++j)
      if (s(j) >= s(i)) risk_set.push_back(r(j));
    double den = 0.0;
    for (double x : risk_set) den += std::exp(x);
    loss -= r(i) - std::log(den);
  }
  return loss;
}

// Gradient of cox_loss by differentiating each term by hand.
inline Vector cox_gradient(const Vector& r, const Vector& s, const IntVector& e) {
  Vector g = Vector::Zero(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!e(i)) continue;
    g(i) -= 1.0;
    double den = 0.0;
    for (Eigen::Index j = 0; j < r.size(); ++j)
      if (s(j) >= s(i)) den += std::exp(r(j));
    for (Eigen::Index j = 0; j < r.size(); ++j)
      if (s(j) >= s(i)) g(j) += std::exp(r(j)) / den;
  }
  return g;
}

struct PairCounts {
  double c_index = 0.5;
  double c_index_censored = std::nan("");
  long comparable = 0;
  long tied = 0;
  long censored = 0;
};

// Every ordered pair enumerated explicitly.
inline PairCounts cindex(const Vector& r, const Vector& s, const IntVector& e) {
  PairCounts p;
  double conc = 0.0, conc_c = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      if (i == j || !e(i) || !(s(i) < s(j))) continue;
      const double score = r(i) > r(j) ? 1.0 : (r(i) == r(j) ? 0.5 : 0.0);
      ++p.comparable;
      if (r(i) == r(j)) ++p.tied;
      conc += score;
      if (!e(j)) {
        ++p.censored;
        conc_c += score;
      }
    }
  if (p.comparable) p.c_index = conc / static_cast<double>(p.comparable);
  if (p.censored) p.c_index_censored = conc_c / static_cast<double>(p.censored);
  return p;
}

inline std::vector<double> distinct_event_times(const Vector& s, const IntVector& e) {
  std::vector<double> t;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (e(i)) t.push_back(s(i));
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

// Product-limit survival at time t, counting deaths and at-risk directly.
inline double km_at(const Vector& s, const IntVector& e, double t) {
  double surv = 1.0;
  for (double u : distinct_event_times(s, e)) {
    if (u > t) break;
    double deaths = 0.0, at_risk = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) >= u) at_risk += 1.0;
      if (s(i) == u && e(i)) deaths += 1.0;
    }
    surv *= 1.0 - deaths / at_risk;
  }
  return surv;
}

// Breslow cumulative hazard at time t.
inline double breslow_at(const Vector& r, const Vector& s, const IntVector& e, double t) {
  double h = 0.0;
  for (double u : distinct_event_times(s, e)) {
    if (u > t) break;
    double deaths = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) >= u) den += std::exp(r(i));
      if (s(i) == u && e(i)) deaths += 1.0;
    }
    h += deaths / den;
  }
  return h;
}

// Sort, then cut at the interpolated 0.33 and 0.66 order statistics.
inline std::vector<int> tertiles(const Vector& r) {
  std::vector<double> v(r.data(), r.data() + r.size());
  std::sort(v.begin(), v.end());
  auto cut = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = lo + 1 < v.size() ? lo + 1 : lo;
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double a = cut(0.33), b = cut(0.66);
  std::vector<int> out;
  for (Eigen::Index i = 0; i < r.size(); ++i) out.push_back(r(i) <= a ? 0 : (r(i) <= b ? 1 : 2));
  return out;
}

// Row-vector affine map with explicit loops.
inline std::vector<double> affine(const std::vector<double>& x, const Matrix& w, const Matrix& b) {
  std::vector<double> y(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    double acc = b(0, j);
    for (Eigen::Index k = 0; k < w.rows(); ++k) acc += x[static_cast<std::size_t>(k)] * w(k, j);
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

inline std::vector<double> row(const Matrix& m, Eigen::Index i) {
  return std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols());
}

inline double head(const std::vector<double>& y, const m4s::RiskHeadT<Matrix>& h) {
  double acc = h.b(0, 0);
  for (std::size_t k = 0; k < y.size(); ++k) acc += y[k] * h.w(static_cast<Eigen::Index>(k), 0);
  return 3.0 * std::tanh(acc);
}

// One encoder token: relu(x W1 + b1) W2 + b2, then layer norm and affine.
inline std::vector<double> encoder_token(const Vector& x, const m4s::EncoderT<Matrix>& enc) {
  std::vector<double> in(x.data(), x.data() + x.size());
  std::vector<double> h = affine(in, enc.layer1.weight, enc.layer1.bias);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  std::vector<double> z = affine(h, enc.layer2.weight, enc.layer2.bias);
  double mu = 0.0;
  for (double v : z) mu += v;
  mu /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z) var += (v - mu) * (v - mu);
  var /= static_cast<double>(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double normed = var > 1e-24 ? (z[k] - mu) / std::sqrt(var) : 0.0;
    z[k] = normed * enc.gamma(0, static_cast<Eigen::Index>(k)) + enc.beta(0, static_cast<Eigen::Index>(k));
  }
  return z;
}

struct MambaRef {
  Matrix y;
  double risk = 0.0;
};

// The recurrence unrolled with scalar loops; h starts at zero.
inline MambaRef mamba(const Matrix& tokens, const m4s::MambaParams& p, const m4s::AdapterOptions& opt) {
  const Eigen::Index L = tokens.rows(), d = tokens.cols(), d_h = p.g_b.cols(), d_y = p.g_c.cols();
  std::vector<double> a(static_cast<std::size_t>(d_h));
  for (Eigen::Index j = 0; j < d_h; ++j) a[static_cast<std::size_t>(j)] = std::exp(-std::exp(p.a_log(0, j)));
  std::vector<double> h(static_cast<std::size_t>(d_h), 0.0);
  MambaRef out;
  out.y = Matrix::Zero(L, d_y);
  for (Eigen::Index n = 0; n < L; ++n) {
    std::vector<double> gated_b(static_cast<std::size_t>(d)), gated_c(static_cast<std::size_t>(d_h));
    for (Eigen::Index k = 0; k < d; ++k) {
      double z = opt.gate_bias;
      for (Eigen::Index m = 0; m < d; ++m) z += tokens(n, m) * p.v_b(m, k);
      gated_b[static_cast<std::size_t>(k)] = sigmoid(z) * tokens(n, k);
    }
    std::vector<double> h_prev = h;
    for (Eigen::Index j = 0; j < d_h; ++j) {
      double u = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) u += gated_b[static_cast<std::size_t>(k)] * p.g_b(k, j);
      h[static_cast<std::size_t>(j)] = h[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(j)] + u;
    }
    const std::vector<double>& read = opt.post_update ? h : h_prev;
    for (Eigen::Index j = 0; j < d_h; ++j) {
      double z = opt.gate_bias;
      for (Eigen::Index m = 0; m < d; ++m) z += tokens(n, m) * p.v_c(m, j);
      gated_c[static_cast<std::size_t>(j)] = sigmoid(z) * read[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index c = 0; c < d_y; ++c) {
      double y = 0.0;
      for (Eigen::Index j = 0; j < d_h; ++j) y += gated_c[static_cast<std::size_t>(j)] * p.g_c(j, c);
      out.y(n, c) = y;
    }
  }
  std::vector<double> pooled = row(out.y, L - 1);
  if (opt.pool == m4s::Pooling::Mean) {
    for (Eigen::Index c = 0; c < d_y; ++c) {
      double s = 0.0;
      for (Eigen::Index n = 0; n < L; ++n) s += out.y(n, c);
      pooled[static_cast<std::size_t>(c)] = s / static_cast<double>(L);
    }
  }
  out.risk = head(pooled, p.head);
  return out;
}

inline double mlp(const Matrix& tokens, const m4s::MlpAdapterParams& p) {
  std::vector<double> x;
  for (Eigen::Index n = 0; n < tokens.rows(); ++n)
    for (Eigen::Index k = 0; k < tokens.cols(); ++k) x.push_back(tokens(n, k));
  std::vector<double> h = affine(x, p.layer1.weight, p.layer1.bias);
  for (double& v : h) v = std::max(v, 0.0);
  return head(affine(h, p.layer2.weight, p.layer2.bias), p.head);
}

inline double attention(const Matrix& tokens, const m4s::AttentionAdapterParams& p, Matrix* weights = nullptr) {
  const Matrix q = matmul(tokens, p.w_q), k = matmul(tokens, p.w_k), v = matmul(tokens, p.w_v);
  const Eigen::Index L = tokens.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.w_k.cols()));
  Matrix w(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(L));
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < L; ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      logits[static_cast<std::size_t>(j)] = dot * scale;
      mx = std::max(mx, dot * scale);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    for (Eigen::Index j = 0; j < L; ++j) w(i, j) = std::exp(logits[static_cast<std::size_t>(j)] - mx) / z;
  }
  if (weights) *weights = w;
  std::vector<double> pooled(static_cast<std::size_t>(v.cols()), 0.0);
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < L; ++j) s += w(i, j) * v(j, c);
      pooled[static_cast<std::size_t>(c)] += s / static_cast<double>(L);
    }
  return head(pooled, p.head);
}

// Random survival instance of size n; times drawn from a small grid so that
// ties occur often.
struct Instance {
  Vector risks, times;
  IntVector events;
};

inline Instance random_instance(std::mt19937_64& rng, Eigen::Index n, bool ties = true) {
  std::normal_distribution<double> normal(0.0, 1.5);
  std::uniform_int_distribution<int> grid(1, 6);
  std::uniform_real_distribution<double> cont(0.1, 10.0);
  std::bernoulli_distribution event(0.6), risk_tie(0.2);
  Instance in{Vector(n), Vector(n), IntVector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    in.risks(i) = (i > 0 && risk_tie(rng)) ? in.risks(i - 1) : normal(rng);
    in.times(i) = ties ? static_cast<double>(grid(rng)) : cont(rng);
    in.events(i) = event(rng) ? 1 : 0;
  }
  return in;
}

}  // namespace oracle
