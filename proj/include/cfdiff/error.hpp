#pragma once

#include <stdexcept>
#include <string>

namespace cfdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input: shape mismatches, unknown names, violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Operation is not defined for the model family (e.g. gradients of trees).
class Unsupported : public Error {
 public:
  using Error::Error;
};

/// CSV/JSON ingestion and file system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfdiff
