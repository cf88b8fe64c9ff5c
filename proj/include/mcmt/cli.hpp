#pragma once

#include <iosfwd>

namespace mcmt {

/// Entry point of the `mcmt` tool. Returns the process exit status.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mcmt
