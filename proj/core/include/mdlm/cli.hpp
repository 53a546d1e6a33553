#pragma once

namespace mdlm::cli {

// Entry point behind the `mdlm` binary. Subcommands: train, generate,
// sweep, eval, inspect-trace. Returns 0 on success, 2 on usage errors,
// 1 on runtime errors. MDLM_THREADS caps worker parallelism.
int dispatch(int argc, const char * const * argv);

}  // namespace mdlm::cli
