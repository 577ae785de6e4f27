#pragma once

#include <stdexcept>
#include <string>

namespace eeml {

// Invalid inputs (dimension mismatches, bad arguments) are reported with
// std::invalid_argument. The types below cover the remaining failure
// categories; the CLI maps them to distinct exit codes.

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage was invoked before the artifact it consumes exists.
class DependencyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during optimization.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Task gradient vanished; the caller decides how to proceed.
class DegenerateEmbeddingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace eeml
