#pragma once

#include <string>
#include <vector>

namespace mcdet::cli {

/// Runs one `mcdet` command. Returns 0 on success, 1 on input or
/// configuration errors, 2 on internal errors.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace mcdet::cli
