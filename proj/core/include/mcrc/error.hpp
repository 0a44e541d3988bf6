#pragma once

#include <stdexcept>
#include <string>

namespace mcrc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are not conformable for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation record (non-scalar loss, foreign variable, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// A RACE-format document that violates the schema.
class MalformedRecord : public Error {
 public:
  using Error::Error;
};

/// Unreadable input files, bad embedding lines, empty corpora.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcrc
