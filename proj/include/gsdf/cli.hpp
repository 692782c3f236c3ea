// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: fuse, track, ba, extract, eval-gradients, eval-ate.

#pragma once

namespace gsdf::cli {

/// Runs one subcommand. Returns 0 on success; on failure writes one line
/// "error: <kind>: <message>" to standard error and returns nonzero
/// (2 for usage errors, 1 for failed pipelines).
int run(int argc, const char* const* argv);

}  // namespace gsdf::cli
