#pragma once

#include "m4s/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace m4s {

enum class Modality : int { T1 = 0, T1PC = 1, T2 = 2, FLAIR = 3, PATH = 4 };

inline constexpr std::size_t kNumModalities = 5;
inline constexpr std::size_t kNumRadiology = 4;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {Modality::T1, Modality::T1PC, Modality::T2,
                                                                        Modality::FLAIR, Modality::PATH};

std::string_view modality_name(Modality m);
std::optional<Modality> parse_modality(std::string_view name);
constexpr bool is_radiology(Modality m) { return m != Modality::PATH; }

/// Precomputed foundation-model embeddings for one subject, indexed by Modality.
struct EmbeddingBundle {
  std::array<Vector, kNumModalities> vectors;

  const Vector& operator[](Modality m) const { return vectors[static_cast<std::size_t>(m)]; }
  Vector& operator[](Modality m) { return vectors[static_cast<std::size_t>(m)]; }

  Eigen::Index d_rad() const { return vectors[0].size(); }
  Eigen::Index d_path() const { return vectors[static_cast<std::size_t>(Modality::PATH)].size(); }
};

struct PatientRecord {
  std::string id;
  EmbeddingBundle bundle;
  double survival_days = 0.0;
  int event = 0;
  std::optional<int> grade;
};

enum class Split : std::uint8_t { Train, Val, Test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct SplitFractions {
  double train = 0.75;
  double val = 0.05;
  double test = 0.20;
};

class CohortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cohort {
  std::vector<PatientRecord> records;
  // Aligned with records when present.
  std::optional<std::vector<Split>> split;

  std::size_t size() const noexcept { return records.size(); }
  Eigen::Index d_rad() const { return records.empty() ? 0 : records.front().bundle.d_rad(); }
  Eigen::Index d_path() const { return records.empty() ? 0 : records.front().bundle.d_path(); }

  /// Indices of records assigned to `s`, in cohort order.
  std::vector<std::size_t> indices(Split s) const;
  Vector times() const;
  IntVector events() const;

  /// Validates ids, survival fields, modality presence and dimensional
  /// consistency. Throws CohortError.
  void validate() const;
};

/// Reads the JSON-Lines embedding format. Unknown top-level keys are skipped
/// and reported through `warnings` when provided.
Cohort read_cohort(std::istream& in, std::vector<std::string>* warnings = nullptr);
Cohort load_cohort(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

void write_cohort(std::ostream& out, const Cohort& cohort);
void save_cohort(const std::filesystem::path& path, const Cohort& cohort);

/// Event-stratified deterministic split. Split sizes are the rounded
/// fractions with the remainder going to train; events are apportioned to
/// splits by largest remainder.
Cohort split_cohort(Cohort cohort, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace m4s
