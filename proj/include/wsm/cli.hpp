#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wsm {

// Entry point of the `wsm` tool. `args` excludes the program name.
// Returns 0 on success, 1 when a check suite fails or a run errors, and 2 on
// usage errors (unknown flag or subcommand, bad configuration).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wsm
