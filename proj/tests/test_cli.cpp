#include "m4s/cli.hpp"
#include "m4s/curves.hpp"
#include "m4s/repro.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace m4s;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("m4s_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const std::vector<std::string> kSmall = {"--d-joint", "8", "--epochs", "2", "--lr", "0.003", "--val-fraction",
                                         "0.15", "--train-fraction", "0.65"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void simulate(const fs::path& out, int n = 120) {
  const Run r = cli({"simulate", "--n", std::to_string(n), "--seed", "7", "--d-rad", "8", "--d-path", "8", "--signal",
                     "2.5", "--out", out.string()});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate writes n lines, a truth sidecar and is deterministic") {
    const fs::path d = scratch("simulate");
    const Run a = cli({"simulate", "--n", "300", "--seed", "7", "--out", (d / "c.jsonl").string()});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("oracle_c_index=") != std::string::npos);
    CHECK(count_lines(d / "c.jsonl") == 300);
    CHECK(count_lines(d / "c.truth.csv") == 301);
    REQUIRE(cli({"simulate", "--n", "300", "--seed", "7", "--out", (d / "c2.jsonl").string()}).code == 0);
    CHECK(slurp(d / "c.jsonl") == slurp(d / "c2.jsonl"));
  }

  TEST_CASE("exit codes") {
    const fs::path d = scratch("codes");
    CHECK(cli({"simulate", "--n", "2", "--out", (d / "x.jsonl").string()}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"train", "--cohort", "x"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"train", "--cohort", (d / "missing.jsonl").string(), "--out-dir", d.string()}).code == kExitRuntime);
    CHECK(cli({"simulate", "--n", "5", "--out", "/proc/m4s/none/c.jsonl"}).code == kExitRuntime);
    simulate(d / "c.jsonl", 30);
    CHECK(cli({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", d.string(), "--batch", "1"}).code == kExitUsage);
    CHECK(cli({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", d.string(), "--adapter", "lstm"}).code ==
          kExitUsage);
  }

  TEST_CASE("train, eval, predict and km end to end") {
    const fs::path d = scratch("pipeline");
    simulate(d / "c.jsonl");
    const Run t = cli(with({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", (d / "run").string()}, kSmall));
    REQUIRE(t.code == 0);
    CHECK(t.out.find("epoch 1 ") != std::string::npos);
    CHECK(t.out.find("epoch 2 ") != std::string::npos);
    CHECK(t.out.find("test_c_index=") != std::string::npos);
    CHECK(t.out.find("oracle_gap=") != std::string::npos);
    CHECK(fs::exists(d / "run" / "checkpoint.bin"));

    const Run e = cli({"eval", "--cohort", (d / "c.jsonl").string(), "--checkpoint", (d / "run/checkpoint.bin").string(),
                       "--split", "test", "--out-dir", (d / "run").string()});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("c_index=") != std::string::npos);
    const auto metrics = nlohmann::json::parse(slurp(d / "run/metrics.json"));
    CHECK(metrics.contains("c_index"));
    CHECK(count_lines(d / "run/risks.csv") == 1 + 24);
    CHECK(cli({"eval", "--cohort", (d / "c.jsonl").string(), "--checkpoint", (d / "run/checkpoint.bin").string(),
               "--split", "holdout", "--out-dir", (d / "run").string()})
              .code == kExitUsage);

    const Run p = cli({"predict", "--cohort", (d / "c.jsonl").string(), "--checkpoint",
                       (d / "run/checkpoint.bin").string(), "--horizons", "180,365,730", "--out-dir",
                       (d / "run").string()});
    REQUIRE(p.code == 0);
    std::ifstream sv(d / "run/survival.csv");
    std::string header;
    std::getline(sv, header);
    CHECK(header == "id,s_180,s_365,s_730");
    CHECK(count_lines(d / "run/survival.csv") == 121);
    CHECK(load_step_csv(d / "run/baseline.csv").times.size() > 0);

    const Run k = cli({"km", "--risks", (d / "run/risks.csv").string(), "--out-dir", (d / "run").string()});
    REQUIRE(k.code == 0);
    for (const char* s : {"low", "mid", "high"}) CHECK(fs::exists(d / "run" / (std::string("km_") + s + ".csv")));
    const std::string svg = slurp(d / "run/km.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    REQUIRE(cli({"km", "--render-only", "--out-dir", (d / "run").string()}).code == 0);
    CHECK(slurp(d / "run/km.svg") == svg);
  }

  TEST_CASE("config file supplies defaults and flags win") {
    const fs::path d = scratch("config");
    simulate(d / "c.jsonl");
    std::ofstream(d / "run.cfg") << "epochs=1\nd_joint=8\nlearning_rate=0.003\n";
    const Run one = cli({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", (d / "a").string(), "--config",
                         (d / "run.cfg").string()});
    REQUIRE(one.code == 0);
    CHECK(one.out.find("epoch 2 ") == std::string::npos);
    const Run two = cli({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", (d / "b").string(), "--config",
                         (d / "run.cfg").string(), "--epochs", "2"});
    REQUIRE(two.code == 0);
    CHECK(two.out.find("epoch 2 ") != std::string::npos);
    std::ofstream(d / "bad.cfg") << "epochs=many\n";
    CHECK(cli({"train", "--cohort", (d / "c.jsonl").string(), "--out-dir", (d / "c").string(), "--config",
               (d / "bad.cfg").string()})
              .code == kExitUsage);
  }

  TEST_CASE("km on a perfect ranking and on an all-censored stratum") {
    const fs::path d = scratch("km");
    {
      std::ofstream f(d / "risks.csv");
      f << "id,risk,survival_days,event,stratum\n";
      for (int i = 0; i < 30; ++i) f << "s" << i << ',' << -i << ',' << i + 1 << ',' << (i % 4 != 3) << ",low\n";
    }
    const Run k = cli({"km", "--risks", (d / "risks.csv").string(), "--split", "median", "--out-dir", d.string()});
    REQUIRE(k.code == 0);
    CHECK(k.out.find("dominance_fraction=1.000000") != std::string::npos);

    {
      std::ofstream f(d / "censored.csv");
      f << "id,risk,survival_days,event\n";
      for (int i = 0; i < 9; ++i) f << "s" << i << ',' << i << ',' << 10 + i << ',' << (i < 3 ? 0 : 1) << '\n';
    }
    REQUIRE(cli({"km", "--risks", (d / "censored.csv").string(), "--out-dir", d.string()}).code == 0);
    const StepCurve low = load_step_csv(d / "km_low.csv");
    CHECK(low.values.isOnes(0.0));

    {
      std::ofstream f(d / "tiny.csv");
      f << "id,risk,survival_days,event\na,1,2,1\nb,2,3,1\n";
    }
    CHECK(cli({"km", "--risks", (d / "tiny.csv").string(), "--out-dir", d.string()}).code == kExitUsage);
  }

  TEST_CASE("ablate writes one row per cohort and adapter") {
    const fs::path d = scratch("ablate");
    simulate(d / "a.jsonl");
    const Run r = cli(with({"ablate", "--cohort", (d / "a.jsonl").string(), "--cohort", (d / "a.jsonl").string(),
                            "--repeats", "2", "--out-dir", (d / "out").string()},
                           {"--d-joint", "8", "--epochs", "1", "--val-fraction", "0.15", "--train-fraction", "0.65"}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("rows=6") != std::string::npos);
    CHECK(count_lines(d / "out/ablation.csv") == 7);
    CHECK(r.out.find("mamba_minus_mlp=") != std::string::npos);
    CHECK(slurp(d / "out/ablation.txt").find("+/-") != std::string::npos);
    CHECK(cli({"ablate", "--cohort", (d / "a.jsonl").string(), "--adapters", "mamba,gru", "--out-dir", d.string()})
              .code == kExitUsage);
  }

  TEST_CASE("curve csv round-trips exactly") {
    const fs::path d = scratch("curves");
    StepCurve c{to_vector({0.0, 1.0 / 3.0, 2.5}), to_vector({1.0, 0.1 + 0.2, 0.0})};
    save_step_csv(d / "c.csv", c);
    const StepCurve back = load_step_csv(d / "c.csv");
    CHECK(back.times == c.times);
    CHECK(back.values == c.values);
    CHECK(render_km_svg({{"x", c}}) == render_km_svg({{"x", back}}));
  }
}

TEST_SUITE("repro") {
  TEST_CASE("a passing manifest") {
    const fs::path d = scratch("repro_ok");
    std::istringstream m(
        "# tiny\n"
        "simulate --n 40 --seed 3 --d-rad 4 --d-path 4 --out $WORK/c.jsonl\n"
        "ASSERT n == 40\n"
        "ASSERT exists:$WORK/c.jsonl == 1 @files\n"
        "ASSERT lines:$WORK/c.jsonl == 40\n"
        "simulate --n 40 --seed 3 --d-rad 4 --d-path 4 --out $WORK/d.jsonl\n"
        "ASSERT same:$WORK/c.jsonl,$WORK/d.jsonl == 1\n"
        "ASSERT step_seconds < 60\n"
        "! simulate --n 1 --out $WORK/e.jsonl\n"
        "ASSERT exit_code == 2\n");
    std::ostringstream log;
    const ReproReport r = run_repro(m, d, log);
    INFO(log.str());
    CHECK(r.passed);
    CHECK(r.steps.size() == 9);
    CHECK(r.steps[2].tag == "files");
  }

  TEST_CASE("an impossible threshold fails and names the step") {
    const fs::path d = scratch("repro_fail");
    std::istringstream m(
        "simulate --n 40 --seed 3 --d-rad 4 --d-path 4 --out $WORK/c.jsonl\n"
        "ASSERT oracle_c_index >= 1.01\n"
        "ASSERT n == 40\n");
    std::ostringstream log;
    const ReproReport r = run_repro(m, d, log);
    CHECK_FALSE(r.passed);
    CHECK(r.failure.find("line 2") != std::string::npos);
    CHECK(r.failure.find("oracle_c_index observed") != std::string::npos);
    CHECK(r.failure.find(">= 1.01") != std::string::npos);
    CHECK(r.failure.find("simulate") != std::string::npos);
    CHECK(r.steps.size() == 2);
  }

  TEST_CASE("undefined keys and failing invocations are hard failures") {
    const fs::path d = scratch("repro_undefined");
    std::istringstream a("simulate --n 40 --d-rad 4 --d-path 4 --out $WORK/c.jsonl\nASSERT no_such_key > 0\n");
    std::ostringstream log;
    CHECK(run_repro(a, d, log).failure.find("undefined") != std::string::npos);
    std::istringstream b("simulate --n 1 --out $WORK/c.jsonl\nASSERT exit_code == 2\n");
    const ReproReport r = run_repro(b, d, log);
    CHECK_FALSE(r.passed);
    CHECK(r.failure.find("exited with 2") != std::string::npos);
  }
}
