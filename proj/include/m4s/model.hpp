#pragma once

// Full risk model F(m): modality encoders followed by one fusion adapter.

#include "m4s/adapters.hpp"
#include "m4s/cohort.hpp"
#include "m4s/encoders.hpp"

#include <cstdint>

namespace m4s {

struct ModelConfig {
  Eigen::Index d_rad = 0;
  Eigen::Index d_path = 0;
  Eigen::Index d_joint = 256;
  Eigen::Index d_hidden = 256;
  AdapterKind kind = AdapterKind::Mamba;
  AdapterOptions adapter;  // adapter.d_joint mirrors d_joint
};

template <typename T>
struct ModelParamsT {
  EncoderParamsT<T> encoders;
  AdapterParamsT<T> adapter;
};

using ModelParams = ModelParamsT<Matrix>;
using ModelVars = ModelParamsT<Var>;

template <typename P, typename F>
void visit_model(P& p, F&& f) {
  visit_encoders(p.encoders, f);
  visit_adapter(p.adapter, f);
}

struct Model {
  ModelConfig config;
  ModelParams params;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

ModelVars bind_model(Tape& tape, const ModelParams& params);

/// Risk column (batch x 1) for the given subjects.
Var forward_risk(const ModelVars& vars, const ModelConfig& config, std::span<const EmbeddingBundle* const> batch);

/// Risks for `indices` of the cohort, evaluated in fixed-size chunks on
/// private tapes.
Vector predict_risks(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& indices);
Vector predict_risks(const Model& model, const Cohort& cohort);

/// Throws std::invalid_argument when the cohort's embedding widths differ
/// from the model's.
void check_dims(const Model& model, const Cohort& cohort);

}  // namespace m4s
