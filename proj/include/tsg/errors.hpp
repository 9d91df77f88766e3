#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tsg {

// Error taxonomy used across the library. The CLI maps ConfigError to
// exit code 2 and everything else to 3.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VersionError : std::runtime_error {
  explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-fatal conditions (vanished BCE class, zero-query video, empty
// prediction list) are appended here instead of throwing.
struct WarningLog {
  std::vector<std::string> records;
  void add(std::string msg) { records.push_back(std::move(msg)); }
  bool empty() const { return records.empty(); }
  void clear() { records.clear(); }
};

void warn(WarningLog* log, const std::string& msg);

}  // namespace tsg
