// SPDX-License-Identifier: Apache-2.0

#pragma once
#include <stdexcept>
#include <string>

namespace varthresh {

// Broad failure classes. The CLI maps each to its own exit code.
enum class ErrorKind { usage, data, numeric, network };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// Malformed input files, invalid parameters, violated preconditions on data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Argument outside the mathematical domain of a function (p >= 1 for a quantile, ...).
class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class NetworkError : public Error {
 public:
  NetworkError(const std::string& what, bool retriable)
      : Error(ErrorKind::network, what), retriable_(retriable) {}
  [[nodiscard]] bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

}  // namespace varthresh
