#include "m4s/adapters.hpp"

#include "m4s/params.hpp"

#include <cmath>
#include <string>

namespace m4s {

std::string_view adapter_name(AdapterKind k) {
  switch (k) {
    case AdapterKind::Mamba: return "mamba";
    case AdapterKind::Mlp: return "mlp";
    case AdapterKind::Attention: return "attention";
  }
  return "?";
}

std::optional<AdapterKind> parse_adapter(std::string_view name) {
  if (name == "mamba") return AdapterKind::Mamba;
  if (name == "mlp") return AdapterKind::Mlp;
  if (name == "attention" || name == "transformer") return AdapterKind::Attention;
  return std::nullopt;
}

std::string_view pooling_name(Pooling p) { return p == Pooling::Last ? "last" : "mean"; }

std::optional<Pooling> parse_pooling(std::string_view name) {
  if (name == "last") return Pooling::Last;
  if (name == "mean") return Pooling::Mean;
  return std::nullopt;
}

RowVector transition_diagonal(const Eigen::Ref<const Matrix>& a_log) {
  return (-a_log.row(0).array().exp()).exp().matrix();
}

Matrix default_a_log(Eigen::Index d_h) {
  Matrix a_log(1, d_h);
  const double lo = std::log(0.5), hi = std::log(0.99);
  for (Eigen::Index k = 0; k < d_h; ++k) {
    const double frac = d_h > 1 ? static_cast<double>(k) / static_cast<double>(d_h - 1) : 0.0;
    const double a = std::exp(lo + frac * (hi - lo));
    a_log(0, k) = std::log(-std::log(a));
  }
  return a_log;
}

namespace {

RiskHeadT<Matrix> init_head(Eigen::Index d_y, std::mt19937_64& rng) {
  return {init_linear(d_y, 1, rng).weight, Matrix::Zero(1, 1)};
}

void require_finite(const Var& v, const char* what, std::size_t step) {
  if (!all_finite(v.value()))
    throw NumericError(std::string("mamba_forward: non-finite ") + what + " at step " + std::to_string(step));
}

TokenBatch as_batch(Tape& tape, const Eigen::Ref<const Matrix>& tokens) {
  TokenBatch out;
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) out.push_back(tape.leaf(tokens.row(r)));
  return out;
}

template <typename Vars, typename Params>
Vars bind(Tape& tape, const Params& p) {
  const AdapterParams wrapped(p);
  AdapterParamsT<Var> vars = like<Var>(wrapped);
  bind_leaves(tape, wrapped, vars, [](auto& params, auto&& f) { visit_adapter(params, f); });
  return std::get<Vars>(vars);
}

}  // namespace

AdapterParams init_adapter(AdapterKind kind, const AdapterOptions& opt, std::mt19937_64& rng) {
  switch (kind) {
    case AdapterKind::Mamba: {
      MambaParams p;
      p.a_log = default_a_log(opt.d_h);
      p.g_b = init_linear(opt.d_joint, opt.d_h, rng).weight;
      p.v_b = init_linear(opt.d_joint, opt.d_joint, rng).weight;
      p.g_c = init_linear(opt.d_h, opt.d_y, rng).weight;
      p.v_c = init_linear(opt.d_joint, opt.d_h, rng).weight;
      p.head = init_head(opt.d_y, rng);
      return p;
    }
    case AdapterKind::Mlp: {
      MlpAdapterParams p;
      p.layer1 = init_linear(static_cast<Eigen::Index>(kNumModalities) * opt.d_joint, opt.d_h, rng);
      p.layer2 = init_linear(opt.d_h, opt.d_y, rng);
      p.head = init_head(opt.d_y, rng);
      return p;
    }
    case AdapterKind::Attention: {
      AttentionAdapterParams p;
      p.w_q = init_linear(opt.d_joint, opt.d_h, rng).weight;
      p.w_k = init_linear(opt.d_joint, opt.d_h, rng).weight;
      p.w_v = init_linear(opt.d_joint, opt.d_y, rng).weight;
      p.head = init_head(opt.d_y, rng);
      return p;
    }
  }
  throw std::invalid_argument("init_adapter: unknown adapter kind");
}

Var risk_head(const RiskHeadT<Var>& head, const Var& features) {
  return ad::scale(ad::tanh(ad::add_row(ad::matmul(features, head.w), head.b)), kRiskBound);
}

MambaBatchOutput mamba_forward(const MambaParamsT<Var>& p, const TokenBatch& tokens, const AdapterOptions& opt) {
  if (tokens.empty()) throw std::invalid_argument("mamba_forward: empty token sequence");
  Tape& tape = *p.g_b.tape();
  const Eigen::Index batch = tokens.front().rows();
  const Eigen::Index d_h = p.g_b.cols();
  if (tokens.front().cols() != p.v_b.rows()) throw ShapeError("mamba_forward", tokens.front().shape(), p.v_b.shape());

  // A_d is frozen: it enters the tape as a constant, never through a_log.
  const Var a_diag = tape.leaf(transition_diagonal(p.a_log.value()));
  Var h = tape.leaf(Matrix::Zero(batch, d_h));

  MambaBatchOutput out;
  out.y.reserve(tokens.size());
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    const Var& t = tokens[n];
    const Var gate_b = ad::sigmoid(ad::add_scalar(ad::matmul(t, p.v_b), opt.gate_bias));
    const Var u = ad::matmul(ad::mul(gate_b, t), p.g_b);
    const Var h_prev = h;
    h = ad::add(ad::mul_row(h, a_diag), u);
    require_finite(h, "state", n + 1);

    const Var gate_c = ad::sigmoid(ad::add_scalar(ad::matmul(t, p.v_c), opt.gate_bias));
    const Var y = ad::matmul(ad::mul(gate_c, opt.post_update ? h : h_prev), p.g_c);
    require_finite(y, "output", n + 1);
    out.y.push_back(y);
    out.max_state_abs = std::max(out.max_state_abs, h.value().cwiseAbs().maxCoeff());
    ++out.steps;
  }

  Var pooled = out.y.back();
  if (opt.pool == Pooling::Mean) {
    pooled = out.y.front();
    for (std::size_t n = 1; n < out.y.size(); ++n) pooled = ad::add(pooled, out.y[n]);
    pooled = ad::scale(pooled, 1.0 / static_cast<double>(out.y.size()));
  }
  out.risk = risk_head(p.head, pooled);
  return out;
}

Var mlp_adapter_forward(const MlpAdapterT<Var>& p, const TokenBatch& tokens) {
  const Var x = ad::concat_cols(tokens);
  if (x.cols() != p.layer1.weight.rows()) throw ShapeError("mlp_adapter_forward", x.shape(), p.layer1.weight.shape());
  const Var hidden = ad::relu(linear(p.layer1, x));
  return risk_head(p.head, linear(p.layer2, hidden));
}

AttentionBatchOutput attention_adapter_forward(const AttentionAdapterT<Var>& p, const TokenBatch& tokens) {
  if (tokens.empty()) throw std::invalid_argument("attention_adapter_forward: empty token sequence");
  if (tokens.front().cols() != p.w_q.rows())
    throw ShapeError("attention_adapter_forward", tokens.front().shape(), p.w_q.shape());
  const Eigen::Index batch = tokens.front().rows();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.w_k.cols()));

  AttentionBatchOutput out;
  std::vector<Var> pooled;
  pooled.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    std::vector<Var> rows;
    rows.reserve(tokens.size());
    for (const Var& t : tokens) rows.push_back(ad::slice_rows(t, b, 1));
    const Var seq = ad::concat_rows(rows);
    const Var q = ad::matmul(seq, p.w_q);
    const Var k = ad::matmul(seq, p.w_k);
    const Var v = ad::matmul(seq, p.w_v);
    const Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_dk));
    out.weights.push_back(attn.value());
    pooled.push_back(ad::mean_rows(ad::matmul(attn, v)));
  }
  out.risk = risk_head(p.head, ad::concat_rows(pooled));
  return out;
}

Var adapter_forward(const AdapterParamsT<Var>& p, const TokenBatch& tokens, const AdapterOptions& opt) {
  switch (kind_of(p)) {
    case AdapterKind::Mamba: return mamba_forward(std::get<MambaParamsT<Var>>(p), tokens, opt).risk;
    case AdapterKind::Mlp: return mlp_adapter_forward(std::get<MlpAdapterT<Var>>(p), tokens);
    case AdapterKind::Attention: return attention_adapter_forward(std::get<AttentionAdapterT<Var>>(p), tokens).risk;
  }
  throw std::logic_error("unreachable adapter kind");
}

MambaResult mamba_forward(const Eigen::Ref<const Matrix>& tokens, const MambaParams& p, const AdapterOptions& opt) {
  Tape tape;
  const auto vars = bind<MambaParamsT<Var>>(tape, p);
  const MambaBatchOutput o = mamba_forward(vars, as_batch(tape, tokens), opt);
  MambaResult r;
  r.y.resize(static_cast<Eigen::Index>(o.y.size()), p.g_c.cols());
  for (std::size_t n = 0; n < o.y.size(); ++n) r.y.row(static_cast<Eigen::Index>(n)) = o.y[n].value().row(0);
  r.risk = o.risk.value()(0, 0);
  r.steps = o.steps;
  r.max_state_abs = o.max_state_abs;
  return r;
}

double mlp_adapter_forward(const Eigen::Ref<const Matrix>& tokens, const MlpAdapterParams& p) {
  Tape tape;
  const auto vars = bind<MlpAdapterT<Var>>(tape, p);
  return mlp_adapter_forward(vars, as_batch(tape, tokens)).value()(0, 0);
}

double attention_adapter_forward(const Eigen::Ref<const Matrix>& tokens, const AttentionAdapterParams& p,
                                 Matrix* weights) {
  Tape tape;
  const auto vars = bind<AttentionAdapterT<Var>>(tape, p);
  const AttentionBatchOutput o = attention_adapter_forward(vars, as_batch(tape, tokens));
  if (weights) *weights = o.weights.front();
  return o.risk.value()(0, 0);
}

double predict_risk(const Eigen::Ref<const Matrix>& tokens, AdapterKind kind, const AdapterParams& params,
                    const AdapterOptions& opt) {
  if (kind_of(params) != kind)
    throw std::invalid_argument("predict_risk: requested " + std::string(adapter_name(kind)) + " but parameters are " +
                                std::string(adapter_name(kind_of(params))));
  switch (kind) {
    case AdapterKind::Mamba: return mamba_forward(tokens, std::get<MambaParams>(params), opt).risk;
    case AdapterKind::Mlp: return mlp_adapter_forward(tokens, std::get<MlpAdapterParams>(params));
    case AdapterKind::Attention: return attention_adapter_forward(tokens, std::get<AttentionAdapterParams>(params));
  }
  throw std::logic_error("unreachable adapter kind");
}

}  // namespace m4s
