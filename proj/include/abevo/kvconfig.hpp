#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "abevo/errors.hpp"

namespace abevo {

// Flat key=value config. Lines starting with '#' and blank lines are
// ignored. Values read by the CLI can be overridden by flags.
class KvConfig {
public:
  KvConfig() = default;
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  // Comma-separated list of doubles.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

}  // namespace abevo
