#pragma once

#include <stdexcept>
#include <string>

namespace dfmim {

// Error kinds surfaced by the library. Plain invalid arguments use
// std::invalid_argument directly.

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, std::string detail)
      : std::runtime_error("config error [" + key + "]: " + detail), key_(std::move(key)), detail_(std::move(detail)) {}
  const std::string& key() const noexcept { return key_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string key_;
  std::string detail_;
};

}  // namespace dfmim
