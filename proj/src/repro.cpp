#include "m4s/repro.hpp"

#include "m4s/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

namespace m4s {
namespace {

namespace fs = std::filesystem;

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line);
  return {std::istream_iterator<std::string>(is), std::istream_iterator<std::string>()};
}

std::string expand(std::string s, const std::string& work) {
  for (std::size_t p = s.find("$WORK"); p != std::string::npos; p = s.find("$WORK", p + work.size()))
    s.replace(p, 5, work);
  return s;
}

std::optional<double> as_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool compare(double a, const std::string& op, double b) {
  if (op == ">=") return a >= b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == "<") return a < b;
  if (op == "==") return a == b;
  if (op == "!=") return a != b;
  throw std::invalid_argument("unknown operator '" + op + "'");
}

struct State {
  std::map<std::string, std::string> values;
  std::string last_run;
};

// Observed value for an assertion key, or nullopt when undefined.
std::optional<std::string> lookup(const State& st, const std::string& key) {
  if (key.rfind("exists:", 0) == 0) return fs::exists(key.substr(7)) ? "1" : "0";
  if (key.rfind("lines:", 0) == 0) {
    const auto text = read_file(key.substr(6));
    if (!text) return std::nullopt;
    std::size_t n = 0;
    for (char c : *text) n += c == '\n' ? 1 : 0;
    if (!text->empty() && text->back() != '\n') ++n;
    return std::to_string(n);
  }
  if (key.rfind("same:", 0) == 0) {
    const std::string rest = key.substr(5);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) return std::nullopt;
    const auto a = read_file(rest.substr(0, comma));
    const auto b = read_file(rest.substr(comma + 1));
    return a && b && *a == *b ? "1" : "0";
  }
  const auto it = st.values.find(key);
  if (it == st.values.end()) return std::nullopt;
  return it->second;
}

}  // namespace

ReproReport run_repro(std::istream& manifest, const fs::path& work_dir, std::ostream& log) {
  const std::string work = work_dir.string();
  fs::create_directories(work_dir);
  ReproReport report;
  State st;
  std::string raw;
  int line_no = 0;

  auto fail = [&](ReproStep& step, const std::string& msg) {
    step.passed = false;
    step.message = msg;
    report.passed = false;
    report.failure = "line " + std::to_string(step.line) + ": " + msg;
    report.steps.push_back(step);
    log << "FAIL " << report.failure << '\n';
    return report;
  };

  while (std::getline(manifest, raw)) {
    ++line_no;
    const std::string line = expand(raw, work);
    std::vector<std::string> tok = tokenize(line);
    if (tok.empty() || tok[0].front() == '#') continue;

    ReproStep step;
    step.line = line_no;
    step.text = raw;

    if (tok[0] == "ASSERT") {
      step.is_assert = true;
      if (!tok.empty() && tok.back().front() == '@') {
        step.tag = tok.back().substr(1);
        tok.pop_back();
      }
      if (tok.size() != 4) return fail(step, "malformed assertion '" + raw + "'");
      const std::string &key = tok[1], &op = tok[2], &expected = tok[3];
      const auto observed = lookup(st, key);
      const std::string where = st.last_run.empty() ? "" : " after '" + st.last_run + "'";
      if (!observed) return fail(step, key + " is undefined" + where);
      step.observed = *observed;
      const auto a = as_number(*observed), b = as_number(expected);
      bool ok = false;
      try {
        if (a && b) ok = compare(*a, op, *b);
        else if (op == "==") ok = *observed == expected;
        else if (op == "!=") ok = *observed != expected;
        else return fail(step, key + ": non-numeric value '" + *observed + "' for " + op);
      } catch (const std::invalid_argument& e) {
        return fail(step, e.what());
      }
      if (!ok) return fail(step, key + " observed " + *observed + ", expected " + op + " " + expected + where);
      step.passed = true;
      log << "PASS " << key << ' ' << op << ' ' << expected << " (observed " << *observed << ")\n";
      report.steps.push_back(step);
      continue;
    }

    bool expect_failure = false;
    if (tok[0] == "!") {
      expect_failure = true;
      tok.erase(tok.begin());
    }
    if (!tok.empty() && tok[0] == "m4survive") tok.erase(tok.begin());
    if (tok.empty()) return fail(step, "empty invocation");

    st.values.clear();
    st.last_run = raw;
    log << "RUN " << line << '\n';
    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = run_cli(tok, out, err);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::istringstream captured(out.str());
    std::string l;
    while (std::getline(captured, l)) {
      log << "  | " << l << '\n';
      const auto eq = l.find('=');
      if (eq != std::string::npos && eq > 0 && l.find(' ') == std::string::npos) st.values[l.substr(0, eq)] = l.substr(eq + 1);
    }
    if (!err.str().empty()) log << "  ! " << err.str();
    st.values["exit_code"] = std::to_string(code);
    st.values["step_seconds"] = fmt(secs);
    step.observed = std::to_string(code);
    if (code != 0 && !expect_failure)
      return fail(step, "'" + raw + "' exited with " + std::to_string(code) + ": " + err.str());
    step.passed = true;
    report.steps.push_back(step);
  }
  return report;
}

ReproReport run_repro_file(const fs::path& manifest, const fs::path& work_dir, std::ostream& log) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  return run_repro(in, work_dir, log);
}

}  // namespace m4s
