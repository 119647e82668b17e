#pragma once

#include <iosfwd>

namespace clie::cli {

// Entry point of the halo-clie tool. Returns 0 on success, 1 on runtime
// errors and 2 on usage errors.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clie::cli
