#pragma once

#include <string>
#include <vector>

namespace csrnet {

// Subcommand dispatcher behind the `csrnet` binary. Returns the process
// exit code: 0 ok, 2 bad arguments, 3 I/O failure, 4 parse failure,
// 5 numeric divergence.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args); // args without argv[0]

} // namespace csrnet
