#pragma once

#include <stdexcept>
#include <string>

namespace copseudo {

// Invalid configuration or specification values. CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or missing input files. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when training code reads the true label of an item whose label is
// marked missing.
class TaintError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace copseudo
