#pragma once

#include <stdexcept>
#include <string>

namespace cnstat {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Raised when an internal cross-check fails (e.g. a Selmer set that is not a
// group). Always indicates a bug, never bad input.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// An average over an empty population was requested.
class UndefinedAverageError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class PrecisionError : public Error {
 public:
  using Error::Error;
};

}  // namespace cnstat
