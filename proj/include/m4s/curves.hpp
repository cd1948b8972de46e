#pragma once

#include "m4s/survival.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace m4s {

/// time,value CSV with a header line; values printed with round-trip precision.
void write_step_csv(std::ostream& out, const Eigen::Ref<const Vector>& times, const Eigen::Ref<const Vector>& values);
void save_step_csv(const std::filesystem::path& path, const StepCurve& curve);
void save_step_csv(const std::filesystem::path& path, const BaselineHazard& baseline);
StepCurve load_step_csv(const std::filesystem::path& path);

struct NamedCurve {
  std::string name;
  StepCurve curve;
};

/// Deterministic SVG rendering of survival step curves on shared axes.
std::string render_km_svg(const std::vector<NamedCurve>& curves);

/// Fraction of the distinct `event_times` at which high(t) <= low(t).
double dominance_fraction(const StepCurve& high, const StepCurve& low, const std::vector<double>& event_times);

std::string format_double(double v);

}  // namespace m4s
