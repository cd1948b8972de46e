#pragma once

#include "m4s/cohort.hpp"
#include "m4s/evaluation.hpp"
#include "m4s/model.hpp"
#include "m4s/survival.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace m4s {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 16;
  int epochs = 30;
  AdapterKind adapter_kind = AdapterKind::Mamba;
  Eigen::Index d_joint = 256;
  Eigen::Index d_hidden = 0;  // 0: same as d_joint
  Eigen::Index d_h = 0;       // 0: same as d_joint
  Eigen::Index d_y = 0;       // 0: same as d_joint
  std::uint64_t seed = 1;

  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double gate_bias = 0.0;
  bool post_update = true;
  Pooling pool = Pooling::Last;
  // One batch per epoch holding the whole training split.
  bool full_batch = false;

  double train_fraction = 0.75;
  double val_fraction = 0.05;
  double test_fraction = 0.20;
  std::uint64_t split_seed = 7;

  /// Sets one field from its key=value spelling. Throws ConfigError.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_key_value() const;

  static std::vector<std::string> keys();
  static TrainConfig parse(std::istream& in);
  static TrainConfig load(const std::filesystem::path& path);

  ModelConfig model_config(Eigen::Index d_rad, Eigen::Index d_path) const;
  SplitFractions fractions() const { return {train_fraction, val_fraction, test_fraction}; }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_c_index = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  Model model;
  std::vector<EpochRecord> history;
  double initial_val_c_index = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;  // 0: initialization
  // Breslow baseline fitted on the training split with the selected parameters.
  BaselineHazard baseline;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called after each epoch; may be empty.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint training of encoders and adapter with the within-batch Cox loss and
/// Adam. Keeps the parameters with the best validation c-index (ties go to
/// the later epoch). The cohort must carry a split.
Checkpoint train(const Cohort& cohort, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Applies the split recorded in the config.
Cohort apply_split(Cohort cohort, const TrainConfig& config);

struct RiskRow {
  std::string id;
  double risk = 0.0;
  double survival_days = 0.0;
  int event = 0;
  RiskStratum stratum = RiskStratum::Low;
};

struct EvalResult {
  MetricReport metrics;
  std::vector<RiskRow> rows;  // cohort order
};

EvalResult evaluate(const Checkpoint& ckpt, const Cohort& cohort, Split split);
/// Evaluates every record regardless of split.
EvalResult evaluate_all(const Checkpoint& ckpt, const Cohort& cohort);

/// Survival probabilities, subjects x horizons. Throws on negative horizons.
Matrix predict_survival(const Checkpoint& ckpt, const Cohort& cohort, const std::vector<double>& horizons);

/// Loss of the model on one fixed batch; used by descent checks.
double batch_loss(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& batch);

/// One Adam step on a fixed batch from fresh optimizer state.
Model adam_step(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& batch, const TrainConfig& config);

}  // namespace m4s
