#pragma once

#include <string>
#include <vector>

#include "abevo/errors.hpp"

namespace abevo {

// RFC-4180-ish CSV. Writing always quotes; reading accepts quoted and bare
// fields, with embedded commas/quotes/newlines inside quoted fields.
std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> csv_parse(const std::string& text);

}  // namespace abevo
