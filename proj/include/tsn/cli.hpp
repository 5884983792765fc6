#pragma once

namespace tsn {

// Entry point behind main(): parses subcommands and maps errors to exit
// codes (0 success, 2 input error, 3 numerical failure).
int run_cli(int argc, const char* const* argv);

}  // namespace tsn
