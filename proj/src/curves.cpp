#include "m4s/curves.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace m4s {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_step_csv(std::ostream& out, const Eigen::Ref<const Vector>& times, const Eigen::Ref<const Vector>& values) {
  out << "time,value\n";
  for (Eigen::Index k = 0; k < times.size(); ++k) out << format_double(times(k)) << ',' << format_double(values(k)) << '\n';
}

namespace {

void save_pair(const std::filesystem::path& path, const Vector& t, const Vector& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_step_csv(out, t, v);
}

}  // namespace

void save_step_csv(const std::filesystem::path& path, const StepCurve& curve) { save_pair(path, curve.times, curve.values); }

void save_step_csv(const std::filesystem::path& path, const BaselineHazard& baseline) {
  save_pair(path, baseline.event_times, baseline.cumulative);
}

StepCurve load_step_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "time,value") throw std::runtime_error(path.string() + ": missing time,value header");
  std::vector<double> t, v;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected time,value");
    try {
      t.push_back(std::stod(line.substr(0, comma)));
      v.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return {to_vector(t), to_vector(v)};
}

std::string render_km_svg(const std::vector<NamedCurve>& curves) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  double t_max = 0.0;
  for (const auto& c : curves)
    if (c.curve.times.size()) t_max = std::max(t_max, c.curve.times.maxCoeff());
  if (t_max <= 0.0) t_max = 1.0;

  auto px = [&](double t) { return kLeft + plot_w * t / t_max; };
  auto py = [&](double s) { return kTop + plot_h * (1.0 - s); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#d62728", "#2ca02c", "#9467bd"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double s = k / 4.0;
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py(s) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
       << num(s).substr(0, 4) << "</text>\n";
    const double t = t_max * k / 4.0;
    os << "<text x=\"" << num(px(t)) << "\" y=\"" << py(0) + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << static_cast<long long>(std::llround(t)) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">time (days)</text>\n";
  os << "<text x=\"15\" y=\"" << kTop + plot_h / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << kTop + plot_h / 2 << ")\">survival probability</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const StepCurve& sc = curves[c].curve;
    const char* color = kColors[c % (sizeof kColors / sizeof kColors[0])];
    os << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" d=\"";
    for (Eigen::Index k = 0; k < sc.times.size(); ++k) {
      if (k == 0) {
        os << 'M' << num(px(sc.times(0))) << ' ' << num(py(sc.values(0)));
      } else {
        os << " H" << num(px(sc.times(k))) << " V" << num(py(sc.values(k)));
      }
    }
    os << "\"/>\n";
    const double ly = kTop + 14.0 + 16.0 * static_cast<double>(c);
    os << "<line x1=\"" << kWidth - 150 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - 130 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kWidth - 125 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << curves[c].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

double dominance_fraction(const StepCurve& high, const StepCurve& low, const std::vector<double>& event_times) {
  const std::set<double> grid(event_times.begin(), event_times.end());
  if (grid.empty()) return 1.0;
  std::size_t ok = 0;
  for (double t : grid) ok += high.at(t) <= low.at(t) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(grid.size());
}

}  // namespace m4s
