#pragma once

#include <stdexcept>
#include <string>

namespace abevo {

// Malformed or inconsistent input data (exit code 2 at the CLI).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Undefined metric / numeric failure (exit code 3 at the CLI).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abevo
