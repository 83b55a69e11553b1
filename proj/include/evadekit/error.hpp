#pragma once

#include <stdexcept>
#include <string>

namespace evadekit {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside an operation's domain (range, finiteness, enum id).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Loss undefined at the given logits (zero DLR denominator).
class DegenerateLogitsError : public DomainError {
 public:
  using DomainError::DomainError;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Malformed configuration; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inconsistent data across inputs; the CLI maps this to exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace evadekit
