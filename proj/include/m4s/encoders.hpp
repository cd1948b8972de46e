#pragma once

// Modality encoders: one two-layer MLP shared by the four MRI contrasts and
// one for pathology, each followed by per-token layer normalization. Output
// tokens are ordered T1, T1PC, T2, FLAIR, PATH.
//
// Parameter structs are templated on their storage: Matrix for the model
// itself, Var for the same parameters bound as leaves of a Tape.

#include "m4s/autodiff.hpp"
#include "m4s/cohort.hpp"

#include <random>
#include <string>
#include <vector>

namespace m4s {

/// Row-vector affine map x -> x W + b; W is d_in x d_out, b is 1 x d_out.
template <typename T>
struct LinearT {
  T weight;
  T bias;
};

template <typename T>
struct EncoderT {
  LinearT<T> layer1;
  LinearT<T> layer2;
  T gamma;  // 1 x d_joint
  T beta;   // 1 x d_joint
};

template <typename T>
struct EncoderParamsT {
  EncoderT<T> rad;
  EncoderT<T> path;
};

using Linear = LinearT<Matrix>;
using EncoderParams = EncoderParamsT<Matrix>;
using EncoderVars = EncoderParamsT<Var>;

// f(name, member, trainable) for every tensor, in a fixed order.
template <typename L, typename F>
void visit_linear(L& lin, const std::string& prefix, F&& f) {
  f(prefix + ".weight", lin.weight, true);
  f(prefix + ".bias", lin.bias, true);
}

template <typename E, typename F>
void visit_encoder(E& enc, const std::string& prefix, F&& f) {
  visit_linear(enc.layer1, prefix + ".layer1", f);
  visit_linear(enc.layer2, prefix + ".layer2", f);
  f(prefix + ".norm.gamma", enc.gamma, true);
  f(prefix + ".norm.beta", enc.beta, true);
}

// Works on const and non-const parameter structs alike.
template <typename P, typename F>
void visit_encoders(P& p, F&& f) {
  visit_encoder(p.rad, "encoder.rad", f);
  visit_encoder(p.path, "encoder.path", f);
}

struct EncoderDims {
  Eigen::Index d_rad = 0;
  Eigen::Index d_path = 0;
  Eigen::Index d_hidden = 256;
  Eigen::Index d_joint = 256;
};

/// Weights uniform(-1/sqrt(d_in), 1/sqrt(d_in)), zero biases, identity affine.
Linear init_linear(Eigen::Index d_in, Eigen::Index d_out, std::mt19937_64& rng);
EncoderParams init_encoders(const EncoderDims& dims, std::mt19937_64& rng);

/// 5 x d_joint token matrix for one subject (rows T1, T1PC, T2, FLAIR, PATH).
using TokenSequence = Matrix;

/// Tokens for a batch, position-major: element p is (batch x d_joint) holding
/// token p of every subject.
using TokenBatch = std::vector<Var>;

Var linear(const LinearT<Var>& lin, const Var& x);

TokenBatch encode_batch(const EncoderVars& params, std::span<const EmbeddingBundle* const> bundles);

TokenSequence encode_patient(const EmbeddingBundle& bundle, const EncoderParams& params);

}  // namespace m4s
