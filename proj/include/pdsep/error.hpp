#pragma once

#include <stdexcept>
#include <string>

namespace pdsep {

/// Base of every library error. The category decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument, bad shape, bad configuration value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Unreadable, truncated or corrupt file; mismatched metadata.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN losses, undefined statistics, failed gradient checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdsep
