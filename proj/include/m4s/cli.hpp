#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace m4s {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `m4survive` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on I/O or runtime failure, 2 on usage or config errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace m4s
