#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cnet {

// Subcommands: prep | collab | eval | predict | score | convert.
// args excludes the program name. Returns 0 on success, 2 on a usage error
// and 1 on any other failure (missing file, bad input).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cnet
