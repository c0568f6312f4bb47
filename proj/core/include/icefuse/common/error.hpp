#pragma once

#include <stdexcept>
#include <string>

namespace icefuse {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/run configuration, or a checkpoint that does not fit it.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, divergence, failed gradient check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace icefuse
