#pragma once

#include <stdexcept>
#include <string>

namespace replysent {

// Bad configuration or command usage (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data: corpora, thread files,
// embeddings, checkpoints (CLI exit code 2).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal numeric failure: shape mismatches, non-finite values,
// invalid tensor operations (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace replysent
