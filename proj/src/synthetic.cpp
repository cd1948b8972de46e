#include "m4s/synthetic.hpp"

#include "m4s/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace m4s {
namespace {

// Counter-based seeding: each (seed, stream, index) gets its own engine, so
// generation order does not affect the values drawn.
std::mt19937_64 engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kMapStream = 0x6d6170;
constexpr std::uint64_t kPatientStream = 0x706174;

Matrix modality_map(const SyntheticSpec& spec, Modality m, Eigen::Index rows) {
  auto rng = engine(spec.seed, kMapStream, static_cast<std::uint64_t>(m));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.latent_dim)));
  Matrix map(rows, spec.latent_dim);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < spec.latent_dim; ++c) map(r, c) = normal(rng);
  return map;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_patients < 3) throw std::invalid_argument("synthetic spec: n_patients must be at least 3");
  if (latent_dim < 1 || d_rad < 1 || d_path < 1) throw std::invalid_argument("synthetic spec: dimensions must be positive");
  if (true_weights.size() != 0 && true_weights.size() != latent_dim)
    throw std::invalid_argument("synthetic spec: true_weights length must equal latent_dim");
  if (!(baseline_rate > 0.0)) throw std::invalid_argument("synthetic spec: baseline_rate must be positive");
  if (!(censor_rate >= 0.0)) throw std::invalid_argument("synthetic spec: censor_rate must be nonnegative");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be nonnegative");
}

Vector SyntheticSpec::default_weights(Eigen::Index latent_dim, double strength) {
  Vector w(latent_dim);
  for (Eigen::Index k = 0; k < latent_dim; ++k) w(k) = (k % 2 == 0 ? 1.0 : -1.0);
  return w * (strength / std::sqrt(static_cast<double>(latent_dim)));
}

SyntheticCohort generate_cohort(const SyntheticSpec& spec) {
  spec.validate();
  const Vector w = spec.weights();
  const auto n = static_cast<Eigen::Index>(spec.n_patients);

  std::array<Matrix, kNumModalities> maps;
  for (Modality m : kAllModalities) maps[static_cast<std::size_t>(m)] = modality_map(spec, m, is_radiology(m) ? spec.d_rad : spec.d_path);

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(spec.n_patients);
  Matrix z(n, spec.latent_dim);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    rngs.push_back(engine(spec.seed, kPatientStream, static_cast<std::uint64_t>(i)));
    for (Eigen::Index k = 0; k < spec.latent_dim; ++k) z(i, k) = std_normal(rngs.back());
  }

  Vector risk = z * w;
  risk.array() -= risk.mean();
  risk = risk.cwiseMax(-3.0).cwiseMin(3.0);

  // Grades follow the tertiles of the true risk.
  Vector sorted = risk;
  std::sort(sorted.data(), sorted.data() + n);
  const double cut1 = sorted((n - 1) / 3), cut2 = sorted((2 * (n - 1)) / 3);

  SyntheticCohort out;
  out.true_risks = risk;
  out.cohort.records.resize(spec.n_patients);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& rng = rngs[static_cast<std::size_t>(i)];
    std::exponential_distribution<double> event_dist(spec.baseline_rate * std::exp(risk(i)));
    const double t_event = std::max(event_dist(rng), 1e-9);
    double t_censor = std::numeric_limits<double>::infinity();
    if (spec.censor_rate > 0.0) t_censor = std::max(std::exponential_distribution<double>(spec.censor_rate)(rng), 1e-9);

    PatientRecord& rec = out.cohort.records[static_cast<std::size_t>(i)];
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05lld", static_cast<long long>(i));
    rec.id = id;
    rec.survival_days = std::min(t_event, t_censor);
    rec.event = t_event <= t_censor ? 1 : 0;
    rec.grade = risk(i) <= cut1 ? 0 : (risk(i) <= cut2 ? 1 : 2);

    std::normal_distribution<double> noise(0.0, 1.0);
    for (Modality m : kAllModalities) {
      const Matrix& map = maps[static_cast<std::size_t>(m)];
      Vector e = map * z.row(i).transpose();
      if (spec.noise_sigma > 0.0)
        for (Eigen::Index k = 0; k < e.size(); ++k) e(k) += spec.noise_sigma * noise(rng);
      rec.bundle[m] = std::move(e);
    }
  }
  return out;
}

double oracle_cindex(const Cohort& cohort, const Eigen::Ref<const Vector>& true_risks) {
  if (static_cast<std::size_t>(true_risks.size()) != cohort.size())
    throw ShapeError("oracle_cindex", Shape{static_cast<Eigen::Index>(cohort.size()), 1}, shape_of(true_risks));
  return concordance_index(true_risks, cohort.times(), cohort.events()).c_index;
}

double expected_censoring_fraction(const SyntheticSpec& spec, std::size_t draws, std::uint64_t seed) {
  spec.validate();
  if (spec.censor_rate == 0.0) return 0.0;
  const Vector w = spec.weights();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    double r = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) r += w(k) * normal(rng);
    r = std::clamp(r, -3.0, 3.0);
    acc += spec.censor_rate / (spec.censor_rate + spec.baseline_rate * std::exp(r));
  }
  return acc / static_cast<double>(draws);
}

}  // namespace m4s
