#pragma once

#include <string>
#include <vector>

namespace seqx {

/// Runs the seqx command line; returns the process exit code
/// (0 ok, 2 input/schema, 3 backend, 4 internal).
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace seqx
