#pragma once

// Proportional-hazards cohorts with known ground-truth risk. Latent factors
// z ~ N(0, I) drive both the true log-hazard (linear in z) and every
// modality's synthetic embedding (a per-modality random linear map of z plus
// noise), so a fused model can recover the risk only through the embeddings.

#include "m4s/cohort.hpp"

#include <cstdint>

namespace m4s {

struct SyntheticSpec {
  std::size_t n_patients = 300;
  Eigen::Index latent_dim = 8;
  Eigen::Index d_rad = 32;
  Eigen::Index d_path = 48;
  Vector true_weights;  // latent_dim; empty means "use default_weights"
  double baseline_rate = 1.0 / 365.0;
  // Zero disables censoring: censor times sit above every event time.
  double censor_rate = 1.0 / 900.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
  /// Weights used when none are given: alternating signs, Euclidean norm `strength`.
  static Vector default_weights(Eigen::Index latent_dim, double strength = kDefaultSignal);
  Vector weights() const { return true_weights.size() ? true_weights : default_weights(latent_dim); }

  static constexpr double kDefaultSignal = 1.5;
};

struct SyntheticCohort {
  Cohort cohort;
  Vector true_risks;
};

SyntheticCohort generate_cohort(const SyntheticSpec& spec);

/// Harrell's c-index of the ground-truth risks against observed outcomes.
double oracle_cindex(const Cohort& cohort, const Eigen::Ref<const Vector>& true_risks);

/// Expected censoring fraction E_r[lc / (lc + l0 exp(r))] under the spec's
/// risk law (clipped), estimated by Monte Carlo with `draws` samples.
double expected_censoring_fraction(const SyntheticSpec& spec, std::size_t draws, std::uint64_t seed);

}  // namespace m4s
