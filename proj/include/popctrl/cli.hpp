#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace popctrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFlagged = 1;
inline constexpr int kExitError = 2;

/// Runs one subcommand. `args` excludes the program name, e.g.
/// {"solve", "--seed", "7", "scenario.json"}. Returns 0 on success, 1 when
/// the run completed with flags, 2 on errors and usage mistakes.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace popctrl
