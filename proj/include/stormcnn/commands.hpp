#pragma once

#include <iosfwd>

#include "stormcnn/config.hpp"

namespace stormcnn {

// Runs one command. Reports go to files under `config.out` (and tables to `out`); diagnostics go
// to `err`. Returns the process exit status; library errors are caught and reported, never rethrown.
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace stormcnn
