#pragma once

#include <ostream>

namespace mlmkit::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a user or input error,
/// 2 on an internal failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlmkit::cli
