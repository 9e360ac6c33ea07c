#pragma once

#include <string>
#include <vector>

namespace qdn {

// Command-line entry point. Exit status: 0 success, 1 usage error,
// 2 data/model error.
int cli_dispatch(int argc, const char* const* argv);

// Same, with arguments in natural order and no program name.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace qdn
