#pragma once

// Fusion adapters mapping a token sequence to a bounded hazard score.
//
// Mamba adapter, per step n with token t_n (row vectors, x W convention):
//   u_n     = (sigmoid(t_n V_B + gate_bias) * t_n) G_B        input-selective B(t_n) t_n
//   h_{n+1} = h_n A_d + u_n,   A_d = diag(exp(-exp(a_log)))  fixed transition
//   y_n     = (sigmoid(t_n V_C + gate_bias) * h_{n+1}) G_C    input-selective C(t_n) h
// with h_1 = 0; the risk head is 3 tanh(y w + b).

#include "m4s/encoders.hpp"

#include <optional>
#include <string_view>
#include <variant>

namespace m4s {

enum class AdapterKind : int { Mamba = 0, Mlp = 1, Attention = 2 };

std::string_view adapter_name(AdapterKind k);
std::optional<AdapterKind> parse_adapter(std::string_view name);

enum class Pooling : int { Last = 0, Mean = 1 };

std::string_view pooling_name(Pooling p);
std::optional<Pooling> parse_pooling(std::string_view name);

inline constexpr double kRiskBound = 3.0;

struct AdapterOptions {
  Eigen::Index d_joint = 256;
  Eigen::Index d_h = 256;
  Eigen::Index d_y = 256;
  double gate_bias = 0.0;
  // Mamba output reads h_{n+1} (true) or h_n (false).
  bool post_update = true;
  Pooling pool = Pooling::Last;
};

template <typename T>
struct RiskHeadT {
  T w;  // d_y x 1
  T b;  // 1 x 1
};

template <typename T>
struct MambaParamsT {
  T a_log;  // 1 x d_h, frozen
  T g_b;    // d_joint x d_h
  T v_b;    // d_joint x d_joint
  T g_c;    // d_h x d_y
  T v_c;    // d_joint x d_h
  RiskHeadT<T> head;
};

template <typename T>
struct MlpAdapterT {
  LinearT<T> layer1;  // (5 d_joint) x d_h
  LinearT<T> layer2;  // d_h x d_y
  RiskHeadT<T> head;
};

template <typename T>
struct AttentionAdapterT {
  T w_q;  // d_joint x d_h
  T w_k;  // d_joint x d_h
  T w_v;  // d_joint x d_y
  RiskHeadT<T> head;
};

template <typename T>
using AdapterParamsT = std::variant<MambaParamsT<T>, MlpAdapterT<T>, AttentionAdapterT<T>>;

using MambaParams = MambaParamsT<Matrix>;
using MlpAdapterParams = MlpAdapterT<Matrix>;
using AttentionAdapterParams = AttentionAdapterT<Matrix>;
using AdapterParams = AdapterParamsT<Matrix>;

template <typename H, typename F>
void visit_head(H& h, F&& f) {
  f("adapter.head.w", h.w, true);
  f("adapter.head.b", h.b, true);
}

template <typename P, typename F>
void visit_adapter(P& params, F&& f) {
  std::visit(
      [&](auto& p) {
        if constexpr (requires { p.a_log; }) {
          f("adapter.mamba.a_log", p.a_log, false);
          f("adapter.mamba.g_b", p.g_b, true);
          f("adapter.mamba.v_b", p.v_b, true);
          f("adapter.mamba.g_c", p.g_c, true);
          f("adapter.mamba.v_c", p.v_c, true);
        } else if constexpr (requires { p.layer1; }) {
          visit_linear(p.layer1, "adapter.mlp.layer1", f);
          visit_linear(p.layer2, "adapter.mlp.layer2", f);
        } else {
          f("adapter.attention.w_q", p.w_q, true);
          f("adapter.attention.w_k", p.w_k, true);
          f("adapter.attention.w_v", p.w_v, true);
        }
        visit_head(p.head, f);
      },
      params);
}

template <typename T>
AdapterKind kind_of(const AdapterParamsT<T>& p) {
  return static_cast<AdapterKind>(p.index());
}

/// Same variant alternative as `p`, storage swapped to U.
template <typename U, typename T>
AdapterParamsT<U> like(const AdapterParamsT<T>& p) {
  switch (kind_of(p)) {
    case AdapterKind::Mamba: return MambaParamsT<U>{};
    case AdapterKind::Mlp: return MlpAdapterT<U>{};
    case AdapterKind::Attention: return AttentionAdapterT<U>{};
  }
  throw std::logic_error("unreachable adapter kind");
}

/// Diagonal of A_d from a_log; every entry lies in (0, 1).
RowVector transition_diagonal(const Eigen::Ref<const Matrix>& a_log);

/// a_log giving A_d entries log-spaced over [0.5, 0.99].
Matrix default_a_log(Eigen::Index d_h);

AdapterParams init_adapter(AdapterKind kind, const AdapterOptions& opt, std::mt19937_64& rng);

struct MambaBatchOutput {
  std::vector<Var> y;      // per position, batch x d_y
  Var risk;                // batch x 1
  std::size_t steps = 0;   // recurrence steps taken
  double max_state_abs = 0.0;
};

/// Batched Mamba scan over any number of positions.
MambaBatchOutput mamba_forward(const MambaParamsT<Var>& p, const TokenBatch& tokens, const AdapterOptions& opt);
Var mlp_adapter_forward(const MlpAdapterT<Var>& p, const TokenBatch& tokens);

struct AttentionBatchOutput {
  Var risk;
  std::vector<Matrix> weights;  // per subject, L x L attention matrix
};
AttentionBatchOutput attention_adapter_forward(const AttentionAdapterT<Var>& p, const TokenBatch& tokens);

Var risk_head(const RiskHeadT<Var>& head, const Var& features);

/// Risk column (batch x 1) from whichever adapter `p` holds.
Var adapter_forward(const AdapterParamsT<Var>& p, const TokenBatch& tokens, const AdapterOptions& opt);

// Single-subject evaluation on a private tape. Token rows are positions.

struct MambaResult {
  Matrix y;  // L x d_y
  double risk = 0.0;
  std::size_t steps = 0;
  double max_state_abs = 0.0;
};

MambaResult mamba_forward(const Eigen::Ref<const Matrix>& tokens, const MambaParams& p, const AdapterOptions& opt);
double mlp_adapter_forward(const Eigen::Ref<const Matrix>& tokens, const MlpAdapterParams& p);
double attention_adapter_forward(const Eigen::Ref<const Matrix>& tokens, const AttentionAdapterParams& p,
                                 Matrix* weights = nullptr);

/// Dispatches on `kind`; throws std::invalid_argument when `params` holds a
/// different adapter.
double predict_risk(const Eigen::Ref<const Matrix>& tokens, AdapterKind kind, const AdapterParams& params,
                    const AdapterOptions& opt);

}  // namespace m4s
