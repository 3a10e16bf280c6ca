#pragma once

#include <string>
#include <vector>

// Command-line front end. Subcommands: gen-data, train, plan, execute,
// evaluate, gradcheck, export-frames, plot. Every run is deterministic given
// its config and seeds, commands that produce a directory echo the fully
// resolved config into it, and exit codes are stable for scripting:
//   0 success, 1 usage error, 2 validation or I/O error, 3 numerical failure.

namespace pdvmrnn {

int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args); // args without the program name

} // namespace pdvmrnn
