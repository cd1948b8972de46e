#include "m4s/model.hpp"

#include "m4s/params.hpp"

#include <random>

namespace m4s {

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.d_rad < 1 || config.d_path < 1) throw std::invalid_argument("init_model: embedding widths must be set");
  if (config.d_joint < 1 || config.d_hidden < 1 || config.adapter.d_h < 1 || config.adapter.d_y < 1)
    throw std::invalid_argument("init_model: layer widths must be positive");
  Model m;
  m.config = config;
  m.config.adapter.d_joint = config.d_joint;
  std::mt19937_64 rng(seed);
  m.params.encoders = init_encoders({config.d_rad, config.d_path, config.d_hidden, config.d_joint}, rng);
  m.params.adapter = init_adapter(config.kind, m.config.adapter, rng);
  return m;
}

ModelVars bind_model(Tape& tape, const ModelParams& params) {
  ModelVars vars{{}, like<Var>(params.adapter)};
  bind_leaves(tape, params, vars, [](auto& p, auto&& f) { visit_model(p, f); });
  return vars;
}

Var forward_risk(const ModelVars& vars, const ModelConfig& config, std::span<const EmbeddingBundle* const> batch) {
  return adapter_forward(vars.adapter, encode_batch(vars.encoders, batch), config.adapter);
}

void check_dims(const Model& model, const Cohort& cohort) {
  if (cohort.d_rad() != model.config.d_rad || cohort.d_path() != model.config.d_path)
    throw std::invalid_argument("cohort embedding widths (d_rad=" + std::to_string(cohort.d_rad()) +
                                ", d_path=" + std::to_string(cohort.d_path()) + ") do not match the model (d_rad=" +
                                std::to_string(model.config.d_rad) + ", d_path=" + std::to_string(model.config.d_path) +
                                ")");
}

Vector predict_risks(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& indices) {
  check_dims(model, cohort);
  const std::vector<std::size_t>& idx = indices;

  constexpr std::size_t kChunk = 64;
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t stop = std::min(idx.size(), start + kChunk);
    std::vector<const EmbeddingBundle*> batch;
    for (std::size_t k = start; k < stop; ++k) batch.push_back(&cohort.records[idx[k]].bundle);
    Tape tape;
    const ModelVars vars = bind_model(tape, model.params);
    const Var risk = forward_risk(vars, model.config, batch);
    out.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start)) = risk.value().col(0);
  }
  return out;
}

Vector predict_risks(const Model& model, const Cohort& cohort) {
  std::vector<std::size_t> all(cohort.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return predict_risks(model, cohort, all);
}

}  // namespace m4s
