#pragma once

#include <stdexcept>
#include <string>

namespace segdesc {

/// Malformed or inconsistent input data (files, records, degenerate segments).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad command line or configuration.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical check failed (gradient check above tolerance, non-finite result).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace segdesc
