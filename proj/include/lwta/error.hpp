#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lwta {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyperparameters (temperature, epsilon, sample counts, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Function evaluated outside its domain, e.g. log of a non-positive value.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (non-scalar loss, label out of range).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A library operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class CountMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lwta
