#pragma once

#include <stdexcept>
#include <string>

namespace opsdann {

/// Base error for contract violations anywhere in the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (CSV, metadata, binary containers).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or training configuration. The message carries the field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace opsdann
