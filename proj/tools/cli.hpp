#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sinkdesc::cli {

/// Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

int run(int argc, char** argv);
/// Same as run(), with explicit streams; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sinkdesc::cli
