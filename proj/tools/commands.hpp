#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nwc::cli {

/// Parses and runs one command line. Returns the process exit code:
/// 0 success, 1 contract or usage error, 2 internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nwc::cli
