#pragma once

// Command-line entry point shared by the `active_mocap` tool and the tests.
// Exit codes: 0 success, 1 runtime failure, 2 unreadable or invalid config
// or input, 3 unsupported checkpoint version, 4 checkpoint does not fit the
// configuration.

#include <iosfwd>

namespace active_mocap::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace active_mocap::cli
