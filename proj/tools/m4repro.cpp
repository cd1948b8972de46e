#include "m4s/cli.hpp"
#include "m4s/repro.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Runs a reproduction manifest step by step", "m4repro"};
  std::string manifest;
  std::string work = "repro_work";
  app.add_option("manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "directory substituted for $WORK")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : m4s::kExitUsage;
  }
  try {
    const m4s::ReproReport report = m4s::run_repro_file(manifest, work, std::cout);
    std::cout << (report.passed ? "repro: PASS" : "repro: FAIL " + report.failure) << '\n';
    return report.passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
