#include "m4s/encoders.hpp"

#include "m4s/params.hpp"

#include <cmath>

namespace m4s {

Linear init_linear(Eigen::Index d_in, Eigen::Index d_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Linear lin;
  lin.weight.resize(d_in, d_out);
  for (Eigen::Index r = 0; r < d_in; ++r)
    for (Eigen::Index c = 0; c < d_out; ++c) lin.weight(r, c) = u(rng);
  lin.bias = Matrix::Zero(1, d_out);
  return lin;
}

namespace {

EncoderT<Matrix> init_encoder(Eigen::Index d_in, const EncoderDims& dims, std::mt19937_64& rng) {
  EncoderT<Matrix> enc;
  enc.layer1 = init_linear(d_in, dims.d_hidden, rng);
  enc.layer2 = init_linear(dims.d_hidden, dims.d_joint, rng);
  enc.gamma = Matrix::Ones(1, dims.d_joint);
  enc.beta = Matrix::Zero(1, dims.d_joint);
  return enc;
}

Var encode(const EncoderT<Var>& enc, const Var& x) {
  const Var hidden = ad::relu(linear(enc.layer1, x));
  return ad::layer_norm_rows(linear(enc.layer2, hidden), enc.gamma, enc.beta);
}

Var stack_modality(Tape& tape, std::span<const EmbeddingBundle* const> bundles, Modality m, Eigen::Index expected) {
  Matrix x(static_cast<Eigen::Index>(bundles.size()), expected);
  for (std::size_t b = 0; b < bundles.size(); ++b) {
    const Vector& v = (*bundles[b])[m];
    if (v.size() != expected)
      throw ShapeError("encode " + std::string(modality_name(m)), Shape{1, v.size()}, Shape{1, expected});
    x.row(static_cast<Eigen::Index>(b)) = v.transpose();
  }
  return tape.leaf(std::move(x));
}

}  // namespace

EncoderParams init_encoders(const EncoderDims& dims, std::mt19937_64& rng) {
  EncoderParams p;
  p.rad = init_encoder(dims.d_rad, dims, rng);
  p.path = init_encoder(dims.d_path, dims, rng);
  return p;
}

Var linear(const LinearT<Var>& lin, const Var& x) { return ad::add_row(ad::matmul(x, lin.weight), lin.bias); }

TokenBatch encode_batch(const EncoderVars& params, std::span<const EmbeddingBundle* const> bundles) {
  if (bundles.empty()) throw std::invalid_argument("encode_batch: empty batch");
  Tape& tape = *params.rad.layer1.weight.tape();
  TokenBatch tokens;
  tokens.reserve(kNumModalities);
  for (Modality m : kAllModalities) {
    const EncoderT<Var>& enc = is_radiology(m) ? params.rad : params.path;
    const Var x = stack_modality(tape, bundles, m, enc.layer1.weight.rows());
    tokens.push_back(encode(enc, x));
  }
  return tokens;
}

TokenSequence encode_patient(const EmbeddingBundle& bundle, const EncoderParams& params) {
  Tape tape;
  EncoderVars vars;
  bind_leaves(tape, params, vars, [](auto& p, auto&& f) { visit_encoders(p, f); });

  const EmbeddingBundle* one[] = {&bundle};
  const TokenBatch tokens = encode_batch(vars, one);
  TokenSequence out(static_cast<Eigen::Index>(kNumModalities), tokens.front().cols());
  for (std::size_t p = 0; p < tokens.size(); ++p) out.row(static_cast<Eigen::Index>(p)) = tokens[p].value().row(0);
  return out;
}

}  // namespace m4s
