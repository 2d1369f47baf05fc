#pragma once

#include <stdexcept>
#include <string>

namespace memlaw {

// Bad user-facing configuration or malformed input (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during a solve or training run (CLI exit code 2).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace memlaw
