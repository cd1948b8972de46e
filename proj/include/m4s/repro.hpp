#pragma once

// Manifest-driven reproduction runner. A manifest is plain text:
//
//   # comment
//   simulate --n 300 --out $WORK/c.jsonl     run m4survive in-process
//   ! train --epochs -1 ...                   run, a nonzero exit is expected
//   ASSERT test_c_index >= 0.75 @tag          check the latest run
//
// Assertion keys are the key=value lines printed by the latest run, plus
// exit_code, step_seconds, exists:<path>, lines:<path> and same:<a>,<b>
// (1 when both files exist and are byte-identical). Operators: >= <= > < == !=.
// `$WORK` expands to the work directory. An optional trailing @tag labels an
// assertion for grouping in reports.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace m4s {

struct ReproStep {
  int line = 0;
  std::string text;
  bool is_assert = false;
  bool passed = false;
  std::string tag;
  std::string observed;
  std::string message;
};

struct ReproReport {
  bool passed = true;
  std::vector<ReproStep> steps;
  // Message of the first hard failure; empty when passed.
  std::string failure;
};

ReproReport run_repro(std::istream& manifest, const std::filesystem::path& work_dir, std::ostream& log);
ReproReport run_repro_file(const std::filesystem::path& manifest, const std::filesystem::path& work_dir, std::ostream& log);

}  // namespace m4s
