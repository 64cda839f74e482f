#pragma once

namespace vts::cli {

// Entry point shared by the binary and the CLI tests. Exit codes: 0 success,
// 1 usage error, 2 runtime error.
int run_cli(int argc, const char* const* argv);

}  // namespace vts::cli
