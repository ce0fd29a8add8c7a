#pragma once

#include <stdexcept>
#include <string>

namespace fseg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments violate an operation's preconditions.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but carries no usable information (e.g. zero variance).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer extents disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API used out of order (e.g. backward without a forward cache).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Model file failed validation.
class CorruptModel : public Error {
 public:
  using Error::Error;
};

/// A dataset file could not be read or parsed.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A file could not be written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Records within a dataset disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fseg
