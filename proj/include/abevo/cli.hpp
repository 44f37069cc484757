#pragma once

#include <string>
#include <vector>

namespace abevo::cli {

extern const char* kToolVersion;

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace abevo::cli
