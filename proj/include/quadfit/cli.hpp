#pragma once

// The `quadfit` command line: synth, zoomout, init-cameras, fit, eval and
// inspect subcommands over a scene directory.

#include <iosfwd>

namespace quadfit::cli {

/// Runs one invocation and returns the process exit status: 0 on success,
/// 2 for input or usage errors, 3 for numerical failures, 4 for no-consensus.
/// Log verbosity comes from QUADFIT_LOG (quiet, error, warn, info, debug).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace quadfit::cli
