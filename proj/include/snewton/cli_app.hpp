#pragma once

#include <iosfwd>

namespace snewton {

// Entry point of the command line tool, factored out so tests can drive it
// in-process. Exit codes: 0 success, 1 failed checks or runtime errors,
// 2 usage/configuration errors, 3 I/O or data-format errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snewton
