#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deepc {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitExperimentFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `deepc` tool. `args` excludes the program name.
[[nodiscard]] int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepc
