#include "m4s/evaluation.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace m4s {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string MetricReport::to_key_value() const {
  std::ostringstream os;
  os << "c_index=" << fmt(c_index) << '\n';
  os << "c_index_censored_pairs=" << (c_index_censored_pairs ? fmt(*c_index_censored_pairs) : "nan") << '\n';
  os << "n_comparable_pairs=" << n_comparable_pairs << '\n';
  os << "n_tied_risk_pairs=" << n_tied_risk_pairs << '\n';
  os << "n_censored_pairs=" << n_censored_pairs << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["c_index"] = c_index;
  j["c_index_censored_pairs"] = c_index_censored_pairs ? nlohmann::ordered_json(*c_index_censored_pairs) : nullptr;
  j["n_comparable_pairs"] = n_comparable_pairs;
  j["n_tied_risk_pairs"] = n_tied_risk_pairs;
  j["n_censored_pairs"] = n_censored_pairs;
  return j.dump(2);
}

}  // namespace m4s
