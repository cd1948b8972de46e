#include "m4s/cohort.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

namespace m4s {

using nlohmann::json;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::T1: return "T1";
    case Modality::T1PC: return "T1PC";
    case Modality::T2: return "T2";
    case Modality::FLAIR: return "FLAIR";
    case Modality::PATH: return "PATH";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view name) {
  for (Modality m : kAllModalities)
    if (modality_name(m) == name) return m;
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Val;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

std::vector<std::size_t> Cohort::indices(Split s) const {
  if (!split) throw CohortError("cohort has no split assignment");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if ((*split)[i] == s) out.push_back(i);
  return out;
}

Vector Cohort::times() const {
  Vector t(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) t(static_cast<Eigen::Index>(i)) = records[i].survival_days;
  return t;
}

IntVector Cohort::events() const {
  IntVector e(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) e(static_cast<Eigen::Index>(i)) = records[i].event;
  return e;
}

void Cohort::validate() const {
  std::unordered_set<std::string> seen;
  const PatientRecord* first = records.empty() ? nullptr : &records.front();
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) throw CohortError("duplicate id '" + r.id + "'");
    if (!(r.survival_days > 0.0) || !std::isfinite(r.survival_days))
      throw CohortError("record '" + r.id + "': survival_days must be positive and finite");
    if (r.event != 0 && r.event != 1) throw CohortError("record '" + r.id + "': event must be 0 or 1");
    if (r.grade && (*r.grade < 0 || *r.grade > 2)) throw CohortError("record '" + r.id + "': grade must be 0, 1 or 2");
    for (Modality m : kAllModalities) {
      const Vector& v = r.bundle[m];
      if (v.size() == 0)
        throw CohortError("record '" + r.id + "': missing modality " + std::string(modality_name(m)));
      if (!all_finite(v))
        throw CohortError("record '" + r.id + "': non-finite entry in " + std::string(modality_name(m)));
      if (is_radiology(m) && v.size() != r.bundle.d_rad())
        throw CohortError("record '" + r.id + "': radiology modalities disagree in dimension");
    }
    if (r.bundle.d_rad() != first->bundle.d_rad())
      throw CohortError("dimension mismatch: d_rad=" + std::to_string(first->bundle.d_rad()) + " in '" + first->id +
                        "' but d_rad=" + std::to_string(r.bundle.d_rad()) + " in '" + r.id + "'");
    if (r.bundle.d_path() != first->bundle.d_path())
      throw CohortError("dimension mismatch: d_path=" + std::to_string(first->bundle.d_path()) + " in '" + first->id +
                        "' but d_path=" + std::to_string(r.bundle.d_path()) + " in '" + r.id + "'");
  }
  if (split && split->size() != records.size()) throw CohortError("split assignment does not cover the record set");
}

namespace {

const std::unordered_set<std::string> kKnownKeys = {"id", "survival_days", "event", "grade", "embeddings"};

PatientRecord parse_record(const json& j, std::size_t line_no, std::vector<std::string>* warnings) {
  const std::string where = "line " + std::to_string(line_no);
  if (!j.is_object()) throw CohortError(where + ": expected a JSON object");
  PatientRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.survival_days = j.at("survival_days").get<double>();
    r.event = j.at("event").get<int>();
    if (auto it = j.find("grade"); it != j.end() && !it->is_null()) r.grade = it->get<int>();
  } catch (const json::exception& e) {
    throw CohortError(where + ": " + e.what());
  }
  const json* emb = j.contains("embeddings") ? &j.at("embeddings") : nullptr;
  if (!emb || !emb->is_object()) throw CohortError(where + ": record '" + r.id + "' has no embeddings object");
  for (Modality m : kAllModalities) {
    const std::string key(modality_name(m));
    auto it = emb->find(key);
    if (it == emb->end() || !it->is_array() || it->empty())
      throw CohortError(where + ": record '" + r.id + "' is missing modality " + key);
    Vector v(static_cast<Eigen::Index>(it->size()));
    for (std::size_t k = 0; k < it->size(); ++k) {
      if (!(*it)[k].is_number()) throw CohortError(where + ": record '" + r.id + "' has a non-numeric " + key + " entry");
      v(static_cast<Eigen::Index>(k)) = (*it)[k].get<double>();
    }
    r.bundle[m] = std::move(v);
  }
  if (warnings) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!kKnownKeys.count(it.key())) warnings->push_back(where + ": ignoring unknown key '" + it.key() + "'");
  }
  return r;
}

}  // namespace

Cohort read_cohort(std::istream& in, std::vector<std::string>* warnings) {
  Cohort c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CohortError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    c.records.push_back(parse_record(j, line_no, warnings));
  }
  c.validate();
  return c;
}

Cohort load_cohort(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw CohortError("cannot open cohort file " + path.string());
  return read_cohort(in, warnings);
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const auto& r : cohort.records) {
    json j;
    j["id"] = r.id;
    j["survival_days"] = r.survival_days;
    j["event"] = r.event;
    j["grade"] = r.grade ? json(*r.grade) : json(nullptr);
    json emb = json::object();
    for (Modality m : kAllModalities) {
      const Vector& v = r.bundle[m];
      emb[std::string(modality_name(m))] = std::vector<double>(v.data(), v.data() + v.size());
    }
    j["embeddings"] = std::move(emb);
    out << j.dump() << '\n';
  }
}

void save_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CohortError("cannot write cohort file " + path.string());
  write_cohort(out, cohort);
  if (!out) throw CohortError("write failed for " + path.string());
}

Cohort split_cohort(Cohort cohort, const SplitFractions& f, std::uint64_t seed) {
  const std::array<double, 3> frac = {f.train, f.val, f.test};
  for (double x : frac)
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("split_cohort: fractions must be nonnegative");
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split_cohort: fractions must sum to 1");

  const std::size_t n = cohort.size();
  std::array<std::size_t, 3> sizes{};
  sizes[1] = static_cast<std::size_t>(std::llround(frac[1] * static_cast<double>(n)));
  sizes[2] = static_cast<std::size_t>(std::llround(frac[2] * static_cast<double>(n)));
  if (sizes[1] + sizes[2] > n) throw std::invalid_argument("split_cohort: rounded val+test exceed the cohort");
  sizes[0] = n - sizes[1] - sizes[2];
  if (n >= 3) {
    for (std::size_t s = 0; s < 3; ++s)
      if (frac[s] > 0.0 && sizes[s] == 0)
        throw std::invalid_argument("split_cohort: " + std::string(split_name(static_cast<Split>(s))) +
                                    " split would receive 0 records");
  }

  std::vector<std::size_t> events, censored;
  for (std::size_t i = 0; i < n; ++i) (cohort.records[i].event ? events : censored).push_back(i);

  // Largest-remainder apportionment of events; ties resolve train, val, test.
  const double n_events = static_cast<double>(events.size());
  std::array<std::size_t, 3> ev{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double quota = n == 0 ? 0.0 : static_cast<double>(sizes[s]) * n_events / static_cast<double>(n);
    ev[s] = static_cast<std::size_t>(std::floor(quota));
    rem[s] = quota - static_cast<double>(ev[s]);
    assigned += ev[s];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < events.size(); k = (k + 1) % 3) {
    const std::size_t s = order[k];
    if (ev[s] < sizes[s]) {
      ++ev[s];
      ++assigned;
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(events.begin(), events.end(), rng);
  std::shuffle(censored.begin(), censored.end(), rng);

  std::vector<Split> assignment(n, Split::Train);
  std::size_t ei = 0, ci = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < ev[s]; ++k) assignment[events[ei++]] = static_cast<Split>(s);
    for (std::size_t k = ev[s]; k < sizes[s]; ++k) assignment[censored[ci++]] = static_cast<Split>(s);
  }
  cohort.split = std::move(assignment);
  return cohort;
}

}  // namespace m4s
