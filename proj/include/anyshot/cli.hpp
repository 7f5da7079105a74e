#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace anyshot {

// Runs one CLI invocation (args without the program name). Returns the
// process exit code. Kept out of main() so tests can drive commands
// in-process.
int cli_run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace anyshot
