#pragma once

#include <stdexcept>
#include <string>

namespace reach {

/// Invalid or missing configuration (schema, values, files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: wrong dimensions, stepping a finished episode, bad batch size.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Inconsistent data handed to a store (e.g. a broken episode chain).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite losses, gradients or advantages during an update.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reach
