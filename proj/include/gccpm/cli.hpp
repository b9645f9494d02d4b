#pragma once

#include <ostream>

namespace gccpm {

/// Command-line entry point. Returns the process exit code: 0 on success, 2 on a
/// usage error, 1 on any other failure. Failures print exactly one line
/// `error: kind=<kind> message=<text>` to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace gccpm
