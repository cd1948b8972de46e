#include "m4s/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace m4s {

// ---------------------------------------------------------------------------
// Config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("config: invalid value '" + value + "' for " + key);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: invalid value '" + value + "' for " + key);
  }
  if (used != value.size() || !std::isfinite(out)) throw ConfigError("config: invalid value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: invalid boolean '" + value + "' for " + key);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::string> TrainConfig::keys() {
  return {"learning_rate", "batch_size", "epochs",     "adapter_kind",   "d_joint",      "d_hidden",
          "d_h",           "d_y",        "seed",       "beta1",          "beta2",        "epsilon",
          "gate_bias",     "post_update", "pool",      "full_batch",     "train_fraction", "val_fraction",
          "test_fraction", "split_seed"};
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "adapter_kind") {
    auto k = parse_adapter(value);
    if (!k) throw ConfigError("config: unknown adapter_kind '" + value + "'");
    adapter_kind = *k;
  } else if (key == "d_joint") d_joint = parse_number<Eigen::Index>(key, value);
  else if (key == "d_hidden") d_hidden = parse_number<Eigen::Index>(key, value);
  else if (key == "d_h") d_h = parse_number<Eigen::Index>(key, value);
  else if (key == "d_y") d_y = parse_number<Eigen::Index>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "epsilon") epsilon = parse_double(key, value);
  else if (key == "gate_bias") gate_bias = parse_double(key, value);
  else if (key == "post_update") post_update = parse_bool(key, value);
  else if (key == "pool") {
    auto p = parse_pooling(value);
    if (!p) throw ConfigError("config: unknown pool '" + value + "'");
    pool = *p;
  } else if (key == "full_batch") full_batch = parse_bool(key, value);
  else if (key == "train_fraction") train_fraction = parse_double(key, value);
  else if (key == "val_fraction") val_fraction = parse_double(key, value);
  else if (key == "test_fraction") test_fraction = parse_double(key, value);
  else if (key == "split_seed") split_seed = parse_number<std::uint64_t>(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("config: batch_size must be at least 2");
  if (epochs < 0) throw ConfigError("config: epochs must be nonnegative");
  if (d_joint < 1 || d_hidden < 0 || d_h < 0 || d_y < 0) throw ConfigError("config: widths must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw ConfigError("config: invalid Adam hyperparameters");
  const double total = train_fraction + val_fraction + test_fraction;
  if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0 || std::abs(total - 1.0) > 1e-9)
    throw ConfigError("config: split fractions must be nonnegative and sum to 1");
}

std::string TrainConfig::to_key_value() const {
  std::ostringstream os;
  os << "learning_rate=" << fmt(learning_rate) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "epochs=" << epochs << '\n'
     << "adapter_kind=" << adapter_name(adapter_kind) << '\n'
     << "d_joint=" << d_joint << '\n'
     << "d_hidden=" << d_hidden << '\n'
     << "d_h=" << d_h << '\n'
     << "d_y=" << d_y << '\n'
     << "seed=" << seed << '\n'
     << "beta1=" << fmt(beta1) << '\n'
     << "beta2=" << fmt(beta2) << '\n'
     << "epsilon=" << fmt(epsilon) << '\n'
     << "gate_bias=" << fmt(gate_bias) << '\n'
     << "post_update=" << (post_update ? "true" : "false") << '\n'
     << "pool=" << pooling_name(pool) << '\n'
     << "full_batch=" << (full_batch ? "true" : "false") << '\n'
     << "train_fraction=" << fmt(train_fraction) << '\n'
     << "val_fraction=" << fmt(val_fraction) << '\n'
     << "test_fraction=" << fmt(test_fraction) << '\n'
     << "split_seed=" << split_seed << '\n';
  return os.str();
}

TrainConfig TrainConfig::parse(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse(in);
}

ModelConfig TrainConfig::model_config(Eigen::Index d_rad, Eigen::Index d_path) const {
  ModelConfig mc;
  mc.d_rad = d_rad;
  mc.d_path = d_path;
  mc.d_joint = d_joint;
  mc.d_hidden = d_hidden > 0 ? d_hidden : d_joint;
  mc.kind = adapter_kind;
  mc.adapter.d_joint = d_joint;
  mc.adapter.d_h = d_h > 0 ? d_h : d_joint;
  mc.adapter.d_y = d_y > 0 ? d_y : d_joint;
  mc.adapter.gate_bias = gate_bias;
  mc.adapter.post_update = post_update;
  mc.adapter.pool = pool;
  return mc;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

std::vector<Matrix*> trainable_tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  visit_model(p, [&](const std::string&, Matrix& m, bool trainable) {
    if (trainable) out.push_back(&m);
  });
  return out;
}

std::vector<Var> trainable_vars(const ModelVars& vars) {
  std::vector<Var> out;
  visit_model(vars, [&](const std::string&, const Var& v, bool trainable) {
    if (trainable) out.push_back(v);
  });
  return out;
}

struct BatchResult {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

BatchResult loss_and_grads(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& batch) {
  Tape tape;
  const ModelVars vars = bind_model(tape, model.params);
  std::vector<const EmbeddingBundle*> bundles;
  Vector times(static_cast<Eigen::Index>(batch.size()));
  IntVector events(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const PatientRecord& r = cohort.records[batch[k]];
    bundles.push_back(&r.bundle);
    times(static_cast<Eigen::Index>(k)) = r.survival_days;
    events(static_cast<Eigen::Index>(k)) = r.event;
  }
  const Var risk = forward_risk(vars, model.config, bundles);
  const Var loss = ad::cox_ranking_loss(risk, times, events);
  BatchResult out;
  out.loss = loss.value()(0, 0);
  if (!std::isfinite(out.loss)) return out;
  const Gradients g = tape.backward(loss);
  for (const Var& v : trainable_vars(vars)) out.grads.push_back(g[v]);
  return out;
}

void apply_adam(ModelParams& params, AdamState& state, const std::vector<Matrix>& grads, const TrainConfig& cfg) {
  std::vector<Matrix*> tensors = trainable_tensors(params);
  if (state.m.empty()) {
    for (const Matrix* t : tensors) {
      state.m.push_back(Matrix::Zero(t->rows(), t->cols()));
      state.v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k].cwiseProduct(grads[k]);
    const auto m_hat = state.m[k].array() / bc1;
    const auto v_hat = state.v[k].array() / bc2;
    tensors[k]->array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, const Cohort& cohort,
                                                   std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  if (batches.size() >= 2) {
    const auto& last = batches.back();
    const bool has_event =
        std::any_of(last.begin(), last.end(), [&](std::size_t i) { return cohort.records[i].event != 0; });
    if (!has_event) {
      auto tail = std::move(batches.back());
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
  }
  return batches;
}

double split_c_index(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& idx) {
  if (idx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const Vector risks = predict_risks(model, cohort, idx);
  Vector times(risks.size());
  IntVector events(risks.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    times(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].survival_days;
    events(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].event;
  }
  try {
    return concordance_index(risks, times, events).c_index;
  } catch (const DegenerateInput&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

BaselineHazard fit_baseline(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& idx) {
  const Vector risks = predict_risks(model, cohort, idx);
  Vector times(risks.size());
  IntVector events(risks.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    times(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].survival_days;
    events(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].event;
  }
  return breslow_baseline(risks, times, events);
}

}  // namespace

Cohort apply_split(Cohort cohort, const TrainConfig& config) {
  return split_cohort(std::move(cohort), config.fractions(), config.split_seed);
}

Checkpoint train(const Cohort& cohort, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (!cohort.split) throw TrainingError("train: cohort has no split assignment");
  const std::vector<std::size_t> train_idx = cohort.indices(Split::Train);
  const std::vector<std::size_t> val_idx = cohort.indices(Split::Val);
  if (train_idx.empty()) throw TrainingError("train: empty training split");
  if (std::none_of(train_idx.begin(), train_idx.end(), [&](std::size_t i) { return cohort.records[i].event != 0; }))
    throw TrainingError("train: training split has no events");

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.model = init_model(config.model_config(cohort.d_rad(), cohort.d_path()), config.seed);
  ckpt.initial_val_c_index = split_c_index(ckpt.model, cohort, val_idx);

  Model current = ckpt.model;
  AdamState adam;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t batch_size = config.full_batch ? train_idx.size() : static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto batches = make_batches(std::move(order), cohort, batch_size);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchResult r = loss_and_grads(current, cohort, batches[b]);
      if (!std::isfinite(r.loss))
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1));
      loss_sum += r.loss;
      apply_adam(current.params, adam, r.grads, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.val_c_index = split_c_index(current, cohort, val_idx);
    ckpt.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    // NaN validation scores never win; without any score the last epoch is kept.
    const double score = std::isnan(rec.val_c_index) ? -std::numeric_limits<double>::infinity() : rec.val_c_index;
    if (score >= best) {
      best = score;
      ckpt.model = current;
      ckpt.best_epoch = epoch;
    }
  }
  ckpt.baseline = fit_baseline(ckpt.model, cohort, train_idx);
  return ckpt;
}

EvalResult evaluate_all(const Checkpoint& ckpt, const Cohort& cohort) {
  std::vector<std::size_t> all(cohort.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Vector risks = predict_risks(ckpt.model, cohort, all);
  EvalResult out;
  out.metrics = concordance_index(risks, cohort.times(), cohort.events());
  const auto strata = stratify_tertiles(risks);
  for (std::size_t k = 0; k < all.size(); ++k) {
    const PatientRecord& r = cohort.records[k];
    out.rows.push_back({r.id, risks(static_cast<Eigen::Index>(k)), r.survival_days, r.event, strata[k]});
  }
  return out;
}

EvalResult evaluate(const Checkpoint& ckpt, const Cohort& cohort, Split split) {
  check_dims(ckpt.model, cohort);
  const std::vector<std::size_t> idx = cohort.indices(split);
  if (idx.size() < 3) throw std::invalid_argument("evaluate: split '" + std::string(split_name(split)) + "' has fewer than 3 subjects");
  const Vector risks = predict_risks(ckpt.model, cohort, idx);
  Vector times(risks.size());
  IntVector events(risks.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    times(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].survival_days;
    events(static_cast<Eigen::Index>(k)) = cohort.records[idx[k]].event;
  }
  EvalResult out;
  out.metrics = concordance_index(risks, times, events);
  const auto strata = stratify_tertiles(risks);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const PatientRecord& r = cohort.records[idx[k]];
    out.rows.push_back({r.id, risks(static_cast<Eigen::Index>(k)), r.survival_days, r.event, strata[k]});
  }
  return out;
}

Matrix predict_survival(const Checkpoint& ckpt, const Cohort& cohort, const std::vector<double>& horizons) {
  for (double h : horizons)
    if (!(h >= 0.0)) throw std::invalid_argument("predict: horizons must be nonnegative");
  const Vector risks = predict_risks(ckpt.model, cohort);
  Matrix out(risks.size(), static_cast<Eigen::Index>(horizons.size()));
  for (Eigen::Index i = 0; i < risks.size(); ++i)
    for (std::size_t h = 0; h < horizons.size(); ++h)
      out(i, static_cast<Eigen::Index>(h)) = survival_function(ckpt.baseline, risks(i), horizons[h]);
  return out;
}

double batch_loss(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& batch) {
  return loss_and_grads(model, cohort, batch).loss;
}

Model adam_step(const Model& model, const Cohort& cohort, const std::vector<std::size_t>& batch,
                const TrainConfig& config) {
  Model next = model;
  AdamState state;
  const BatchResult r = loss_and_grads(model, cohort, batch);
  apply_adam(next.params, state, r.grads, config);
  return next;
}

}  // namespace m4s
