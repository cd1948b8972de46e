#include "m4s/cli.hpp"

#include "m4s/curves.hpp"
#include "m4s/synthetic.hpp"
#include "m4s/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace m4s {
namespace {

namespace fs = std::filesystem;

// Usage-level failure raised after parsing (bad flag combinations, bad lists).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string fixed(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw std::runtime_error("cannot create output directory " + dir);
  return p;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; zero for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::nan("") : 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- truth sidecar -------------------------------------------------------

fs::path truth_path(const fs::path& cohort_path) {
  fs::path p = cohort_path;
  p.replace_extension(".truth.csv");
  return p;
}

void save_truth(const fs::path& path, const Cohort& cohort, const Vector& risks) {
  auto out = open_out(path);
  out << "id,true_risk\n";
  for (std::size_t i = 0; i < cohort.size(); ++i)
    out << cohort.records[i].id << ',' << format_double(risks(static_cast<Eigen::Index>(i))) << '\n';
}

// Truth risks aligned with the cohort, if a complete sidecar exists.
std::optional<Vector> load_truth(const fs::path& cohort_path, const Cohort& cohort) {
  const fs::path path = truth_path(cohort_path);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::unordered_map<std::string, double> by_id;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    by_id[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  Vector r(static_cast<Eigen::Index>(cohort.size()));
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    auto it = by_id.find(cohort.records[i].id);
    if (it == by_id.end()) return std::nullopt;
    r(static_cast<Eigen::Index>(i)) = it->second;
  }
  return r;
}

double oracle_on(const Cohort& cohort, const Vector& truth, const std::vector<std::size_t>& idx) {
  Vector r(static_cast<Eigen::Index>(idx.size())), t(r.size());
  IntVector e(r.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    r(kk) = truth(static_cast<Eigen::Index>(idx[k]));
    t(kk) = cohort.records[idx[k]].survival_days;
    e(kk) = cohort.records[idx[k]].event;
  }
  return concordance_index(r, t, e).c_index;
}

// ---- risk tables ---------------------------------------------------------

void save_risks(const fs::path& path, const std::vector<RiskRow>& rows) {
  auto out = open_out(path);
  out << "id,risk,survival_days,event,stratum\n";
  for (const auto& r : rows)
    out << r.id << ',' << format_double(r.risk) << ',' << format_double(r.survival_days) << ',' << r.event << ','
        << stratum_name(r.stratum) << '\n';
}

std::vector<RiskRow> load_risks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,risk,survival_days,event", 0) != 0)
    throw std::runtime_error(path.string() + ": expected header id,risk,survival_days,event[,stratum]");
  std::vector<RiskRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 4) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    RiskRow r;
    try {
      r.id = f[0];
      r.risk = std::stod(f[1]);
      r.survival_days = std::stod(f[2]);
      r.event = std::stoi(f[3]);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

double max_abs_risk(const std::vector<RiskRow>& rows) {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.risk));
  return m;
}

// ---- shared training flags -----------------------------------------------

struct TrainFlags {
  std::string config_path;
  std::map<std::string, std::string> values;  // config key -> raw flag value

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "key=value run config; flags override it")->check(CLI::ExistingFile);
    for (const std::string& key : TrainConfig::keys()) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (key == "learning_rate") flag += ",--lr";
      if (key == "batch_size") flag += ",--batch";
      if (key == "adapter_kind") flag += ",--adapter";
      app->add_option(flag, values[key], "config key " + key);
    }
  }

  TrainConfig resolve(const CLI::App* app) const {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::load(config_path);
    for (const auto& [key, value] : values) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (app->count(flag) > 0) cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
  }
};

Cohort load_split_cohort(const std::string& path, const TrainConfig& cfg, std::ostream& err) {
  std::vector<std::string> warnings;
  Cohort c = load_cohort(path, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return apply_split(std::move(c), cfg);
}

// ---- commands ------------------------------------------------------------

struct SimulateArgs {
  SyntheticSpec spec;
  double signal = SyntheticSpec::kDefaultSignal;
  std::size_t n = 300;
  std::string out_path;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  SyntheticSpec spec = a.spec;
  spec.n_patients = a.n;
  spec.true_weights = SyntheticSpec::default_weights(spec.latent_dim, a.signal);
  const SyntheticCohort sc = generate_cohort(spec);
  const fs::path path(a.out_path);
  if (path.has_parent_path()) prepare_dir(path.parent_path().string());
  save_cohort(path, sc.cohort);
  save_truth(truth_path(path), sc.cohort, sc.true_risks);

  const IntVector e = sc.cohort.events();
  const double censored = 1.0 - static_cast<double>(e.sum()) / static_cast<double>(e.size());
  out << "n=" << sc.cohort.size() << '\n';
  out << "censored_fraction=" << fixed(censored) << '\n';
  out << "oracle_c_index=" << fixed(oracle_cindex(sc.cohort, sc.true_risks)) << '\n';
  out << "cohort=" << path.string() << '\n';
  out << "truth=" << truth_path(path).string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string cohort;
  std::string out_dir;
  int repeats = 1;
};

int cmd_train(const TrainArgs& a, const TrainConfig& base, std::ostream& out, std::ostream& err) {
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  const Cohort cohort = load_split_cohort(a.cohort, base, err);
  const fs::path dir = prepare_dir(a.out_dir);
  const std::optional<Vector> truth = load_truth(a.cohort, cohort);
  const std::vector<std::size_t> test_idx = cohort.indices(Split::Test);

  std::vector<double> test_scores;
  double total_seconds = 0.0, max_risk = 0.0;
  for (int r = 0; r < a.repeats; ++r) {
    TrainConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(r);
    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ckpt = train(cohort, cfg, [&](const EpochRecord& h) {
      out << "epoch " << h.epoch << " train_loss " << fixed(h.train_loss) << " val_c_index " << fixed(h.val_c_index)
          << '\n';
    });
    const double secs = seconds_since(t0);
    total_seconds += secs;
    const EvalResult res = evaluate(ckpt, cohort, Split::Test);
    test_scores.push_back(res.metrics.c_index);
    max_risk = std::max(max_risk, max_abs_risk(evaluate_all(ckpt, cohort).rows));
    if (r == 0) {
      save_checkpoint(dir / "checkpoint.bin", ckpt);
      out << "best_epoch=" << ckpt.best_epoch << '\n';
      out << "elapsed_seconds=" << fixed(secs) << '\n';
    }
    if (a.repeats > 1) out << "repeat " << r << " seed " << cfg.seed << " test_c_index " << fixed(res.metrics.c_index) << '\n';
  }

  out << "test_c_index=" << fixed(test_scores.front()) << '\n';
  if (a.repeats > 1) {
    out << "test_c_index_mean=" << fixed(mean_of(test_scores)) << '\n';
    out << "test_c_index_std=" << fixed(std_of(test_scores)) << '\n';
    out << "total_seconds=" << fixed(total_seconds) << '\n';
  }
  out << "max_abs_risk=" << format_double(max_risk) << '\n';
  if (truth) {
    const double oracle = oracle_cindex(cohort, *truth);
    const double oracle_test = oracle_on(cohort, *truth, test_idx);
    out << "oracle_c_index=" << fixed(oracle) << '\n';
    out << "oracle_test_c_index=" << fixed(oracle_test) << '\n';
    out << "oracle_gap=" << fixed(oracle - test_scores.front()) << '\n';
    out << "oracle_test_gap=" << fixed(oracle_test - test_scores.front()) << '\n';
  }
  out << "checkpoint=" << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string cohort;
  std::string checkpoint;
  std::string split = "test";
  std::string out_dir;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Cohort cohort = load_split_cohort(a.cohort, ckpt.config, err);
  EvalResult res;
  if (a.split == "all") {
    res = evaluate_all(ckpt, cohort);
  } else {
    const auto s = parse_split(a.split);
    if (!s) throw UsageError("unknown split '" + a.split + "' (train, val, test, all)");
    res = evaluate(ckpt, cohort, *s);
  }
  const fs::path dir = prepare_dir(a.out_dir);
  write_text(dir / "metrics.json", res.metrics.to_json());
  save_risks(dir / "risks.csv", res.rows);
  out << res.metrics.to_key_value();
  out << "n=" << res.rows.size() << '\n';
  out << "max_abs_risk=" << format_double(max_abs_risk(res.rows)) << '\n';
  return kExitOk;
}

struct PredictArgs {
  std::string cohort;
  std::string checkpoint;
  std::string horizons = "180,365,730";
  std::string out_dir;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<double> horizons;
  for (const auto& h : split_list(a.horizons)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(h, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != h.size()) throw UsageError("invalid horizon '" + h + "'");
    horizons.push_back(v);
  }
  if (horizons.empty()) throw UsageError("--horizons needs at least one value");

  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  std::vector<std::string> warnings;
  const Cohort cohort = load_cohort(a.cohort, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  const Matrix surv = predict_survival(ckpt, cohort, horizons);

  const fs::path dir = prepare_dir(a.out_dir);
  auto f = open_out(dir / "survival.csv");
  f << "id";
  for (double h : horizons) f << ",s_" << format_double(h);
  f << '\n';
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    f << cohort.records[i].id;
    for (Eigen::Index k = 0; k < surv.cols(); ++k) f << ',' << format_double(surv(static_cast<Eigen::Index>(i), k));
    f << '\n';
  }
  save_step_csv(dir / "baseline.csv", ckpt.baseline);
  out << "n=" << cohort.size() << '\n';
  out << "horizons=" << horizons.size() << '\n';
  out << "min_survival=" << fixed(surv.size() ? surv.minCoeff() : std::nan("")) << '\n';
  out << "max_survival=" << fixed(surv.size() ? surv.maxCoeff() : std::nan("")) << '\n';
  return kExitOk;
}

struct KmArgs {
  std::string risks;
  std::string split = "tertile";
  std::string out_dir;
  bool render_only = false;
};

// Strata present for a stratification mode, lowest risk first.
std::vector<RiskStratum> strata_for(const std::string& mode) {
  if (mode == "median") return {RiskStratum::Low, RiskStratum::High};
  return {RiskStratum::Low, RiskStratum::Mid, RiskStratum::High};
}

int cmd_km(const KmArgs& a, std::ostream& out) {
  if (a.split != "tertile" && a.split != "median") throw UsageError("--split must be tertile or median");
  const fs::path dir = prepare_dir(a.out_dir);

  std::vector<NamedCurve> curves;
  if (a.render_only) {
    for (RiskStratum s : strata_for(a.split)) {
      const fs::path p = dir / ("km_" + std::string(stratum_name(s)) + ".csv");
      curves.push_back({std::string(stratum_name(s)), load_step_csv(p)});
    }
    write_text(dir / "km.svg", render_km_svg(curves));
    out << "curves=" << curves.size() << '\n';
    return kExitOk;
  }

  if (a.risks.empty()) throw UsageError("--risks is required unless --render-only is given");
  const std::vector<RiskRow> rows = load_risks(a.risks);
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (a.split == "tertile" && n < 3) throw UsageError("tertile stratification needs at least 3 subjects");
  if (n < 2) throw UsageError("median stratification needs at least 2 subjects");
  Vector risk(n);
  for (Eigen::Index i = 0; i < n; ++i) risk(i) = rows[static_cast<std::size_t>(i)].risk;
  const std::vector<RiskStratum> label = a.split == "median" ? stratify_median(risk) : stratify_tertiles(risk);

  std::vector<double> event_times;
  for (const auto& r : rows)
    if (r.event) event_times.push_back(r.survival_days);

  std::map<RiskStratum, StepCurve> by_stratum;
  for (RiskStratum s : strata_for(a.split)) {
    std::vector<double> t;
    std::vector<int> e;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (label[i] != s) continue;
      t.push_back(rows[i].survival_days);
      e.push_back(rows[i].event);
    }
    out << "n_" << stratum_name(s) << '=' << t.size() << '\n';
    const IntVector ev = Eigen::Map<const IntVector>(e.data(), static_cast<Eigen::Index>(e.size()));
    const StepCurve curve = kaplan_meier(to_vector(t), ev);
    save_step_csv(dir / ("km_" + std::string(stratum_name(s)) + ".csv"), curve);
    curves.push_back({std::string(stratum_name(s)), curve});
    by_stratum.emplace(s, curve);
  }
  write_text(dir / "km.svg", render_km_svg(curves));
  out << "n_events=" << event_times.size() << '\n';
  out << "dominance_fraction="
      << fixed(dominance_fraction(by_stratum.at(RiskStratum::High), by_stratum.at(RiskStratum::Low), event_times)) << '\n';
  return kExitOk;
}

struct AblateArgs {
  std::vector<std::string> cohorts;
  std::string adapters = "mamba,mlp,attention";
  int repeats = 3;
  std::string out_dir;
};

struct AblationRow {
  std::string cohort;
  AdapterKind adapter;
  std::vector<double> c_index;
  std::vector<double> c_index_censored;
  std::optional<double> oracle;
};

int cmd_ablate(const AblateArgs& a, const TrainConfig& base, std::ostream& out, std::ostream& err) {
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  std::vector<AdapterKind> kinds;
  for (const auto& name : split_list(a.adapters)) {
    const auto k = parse_adapter(name);
    if (!k) throw UsageError("unknown adapter '" + name + "'");
    kinds.push_back(*k);
  }
  if (kinds.empty()) throw UsageError("--adapters needs at least one adapter");
  const fs::path dir = prepare_dir(a.out_dir);

  std::vector<AblationRow> rows;
  double max_risk = 0.0;
  for (const auto& path : a.cohorts) {
    const Cohort cohort = load_split_cohort(path, base, err);
    const std::optional<Vector> truth = load_truth(path, cohort);
    const std::string name = fs::path(path).stem().string();
    for (AdapterKind kind : kinds) {
      AblationRow row{name, kind, {}, {}, std::nullopt};
      if (truth) row.oracle = oracle_on(cohort, *truth, cohort.indices(Split::Test));
      for (int r = 0; r < a.repeats; ++r) {
        TrainConfig cfg = base;
        cfg.adapter_kind = kind;
        cfg.seed = base.seed + static_cast<std::uint64_t>(r);
        const Checkpoint ckpt = train(cohort, cfg);
        const EvalResult res = evaluate(ckpt, cohort, Split::Test);
        row.c_index.push_back(res.metrics.c_index);
        if (res.metrics.c_index_censored_pairs) row.c_index_censored.push_back(*res.metrics.c_index_censored_pairs);
        max_risk = std::max(max_risk, max_abs_risk(evaluate_all(ckpt, cohort).rows));
        out << "cell " << name << ' ' << adapter_name(kind) << " seed " << cfg.seed << " c_index "
            << fixed(res.metrics.c_index) << '\n';
      }
      rows.push_back(std::move(row));
    }
  }

  auto csv = open_out(dir / "ablation.csv");
  csv << "cohort,adapter,repeats,c_index_mean,c_index_std,c_index_censored_mean,c_index_censored_std,oracle_test_c_index\n";
  for (const auto& r : rows) {
    csv << r.cohort << ',' << adapter_name(r.adapter) << ',' << r.c_index.size() << ',' << format_double(mean_of(r.c_index))
        << ',' << format_double(std_of(r.c_index)) << ',' << format_double(mean_of(r.c_index_censored)) << ','
        << format_double(std_of(r.c_index_censored)) << ',' << (r.oracle ? format_double(*r.oracle) : "nan") << '\n';
  }

  // Aligned text table.
  std::vector<std::array<std::string, 5>> cells = {{"cohort", "adapter", "c_index", "c_index_censored", "oracle"}};
  for (const auto& r : rows)
    cells.push_back({r.cohort, std::string(adapter_name(r.adapter)),
                     fixed(mean_of(r.c_index)).substr(0, 6) + " +/- " + fixed(std_of(r.c_index)).substr(0, 6),
                     fixed(mean_of(r.c_index_censored)).substr(0, 6) + " +/- " +
                         fixed(std_of(r.c_index_censored)).substr(0, 6),
                     r.oracle ? fixed(*r.oracle).substr(0, 6) : "-"});
  std::array<std::size_t, 5> width{};
  for (const auto& c : cells)
    for (std::size_t k = 0; k < c.size(); ++k) width[k] = std::max(width[k], c[k].size());
  std::ostringstream table;
  for (const auto& c : cells) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      table << c[k];
      if (k + 1 < c.size()) table << std::string(width[k] - c[k].size() + 2, ' ');
    }
    table << '\n';
  }
  write_text(dir / "ablation.txt", table.str());
  out << table.str();

  // Worst case over cohorts of the Mamba margin against each baseline.
  auto margin = [&](AdapterKind other) {
    double worst = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& m : rows) {
      if (m.adapter != AdapterKind::Mamba) continue;
      for (const auto& o : rows) {
        if (o.cohort != m.cohort || o.adapter != other) continue;
        worst = std::min(worst, mean_of(m.c_index) - mean_of(o.c_index));
        any = true;
      }
    }
    return any ? worst : std::nan("");
  };
  double min_mean = std::numeric_limits<double>::infinity(), max_excess = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    min_mean = std::min(min_mean, mean_of(r.c_index));
    if (r.oracle) max_excess = std::max(max_excess, mean_of(r.c_index) - *r.oracle);
  }
  out << "rows=" << rows.size() << '\n';
  out << "mamba_minus_mlp=" << fixed(margin(AdapterKind::Mlp)) << '\n';
  out << "mamba_minus_attention=" << fixed(margin(AdapterKind::Attention)) << '\n';
  out << "min_mean_c_index=" << fixed(min_mean) << '\n';
  if (std::isfinite(max_excess)) out << "max_excess_over_oracle=" << fixed(max_excess) << '\n';
  out << "max_abs_risk=" << format_double(max_risk) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal survival prediction with a selective state-space adapter", "m4survive"};
  app.require_subcommand(1);
  std::function<int()> action;

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic proportional-hazards cohort");
  simulate->add_option("--n", sim.n, "number of subjects")->capture_default_str();
  simulate->add_option("--seed", sim.spec.seed)->capture_default_str();
  simulate->add_option("--latent-dim", sim.spec.latent_dim)->capture_default_str();
  simulate->add_option("--d-rad", sim.spec.d_rad, "radiology embedding width")->capture_default_str();
  simulate->add_option("--d-path", sim.spec.d_path, "pathology embedding width")->capture_default_str();
  simulate->add_option("--signal", sim.signal, "norm of the true risk weights")->capture_default_str();
  simulate->add_option("--baseline-rate", sim.spec.baseline_rate)->capture_default_str();
  simulate->add_option("--censor-rate", sim.spec.censor_rate, "0 disables censoring")->capture_default_str();
  simulate->add_option("--noise-sigma", sim.spec.noise_sigma)->capture_default_str();
  simulate->add_option("--out", sim.out_path, "cohort JSONL path")->required();
  simulate->callback([&] { action = [&] { return cmd_simulate(sim, out); }; });

  TrainArgs tr;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train encoders and adapter jointly");
  train_cmd->add_option("--cohort", tr.cohort)->required();
  train_cmd->add_option("--out-dir", tr.out_dir)->required();
  train_cmd->add_option("--repeats", tr.repeats, "runs with seeds seed, seed+1, ...")->capture_default_str();
  train_flags.add_to(train_cmd);
  train_cmd->callback([&] {
    action = [&] { return cmd_train(tr, train_flags.resolve(train_cmd), out, err); };
  });

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval_cmd->add_option("--cohort", ev.cohort)->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--split", ev.split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--out-dir", ev.out_dir)->required();
  eval_cmd->callback([&] { action = [&] { return cmd_eval(ev, out, err); }; });

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "survival probabilities at fixed horizons");
  predict->add_option("--cohort", pr.cohort)->required();
  predict->add_option("--checkpoint", pr.checkpoint)->required();
  predict->add_option("--horizons", pr.horizons, "comma-separated days")->capture_default_str();
  predict->add_option("--out-dir", pr.out_dir)->required();
  predict->callback([&] { action = [&] { return cmd_predict(pr, out, err); }; });

  KmArgs km;
  auto* km_cmd = app.add_subcommand("km", "Kaplan-Meier curves per risk stratum");
  km_cmd->add_option("--risks", km.risks, "risk table written by eval");
  km_cmd->add_option("--split", km.split, "tertile or median")->capture_default_str();
  km_cmd->add_option("--out-dir", km.out_dir)->required();
  km_cmd->add_flag("--render-only", km.render_only, "re-render km.svg from the curve CSVs in --out-dir");
  km_cmd->callback([&] { action = [&] { return cmd_km(km, out); }; });

  AblateArgs ab;
  TrainFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "adapter x cohort grid with mean and std over seeds");
  ablate->add_option("--cohort", ab.cohorts, "cohort file; repeat for several")->required();
  ablate->add_option("--adapters", ab.adapters, "comma-separated adapters")->capture_default_str();
  ablate->add_option("--repeats", ab.repeats)->capture_default_str();
  ablate->add_option("--out-dir", ab.out_dir)->required();
  ablate_flags.add_to(ablate);
  ablate->callback([&] { action = [&] { return cmd_ablate(ab, ablate_flags.resolve(ablate), out, err); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace m4s
