#pragma once

#include <stdexcept>
#include <string>

namespace oneshot {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something the contract forbids (empty input, NaN, bad flag).
class UsageError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class IndexError : public UsageError {
 public:
  using UsageError::UsageError;
};

// The vocabulary cannot hold another distinct word without angular aliasing.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent external data (files, snapshots, specs).
class DataError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace oneshot
