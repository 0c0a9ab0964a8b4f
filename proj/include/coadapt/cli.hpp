#pragma once

#include <string>
#include <vector>

namespace coadapt {

/// Subcommands generate, simulate, train, eval, mi, serve. Returns 0 on
/// success, 2 on a usage error, 1 on a runtime error.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace coadapt
