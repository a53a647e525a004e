#pragma once

namespace avsep {

// Full command-line surface; returns the process exit code (0 success,
// 1 input/config error, 2 internal error).
int run_cli(int argc, const char* const* argv);

}  // namespace avsep
