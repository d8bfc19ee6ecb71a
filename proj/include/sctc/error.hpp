#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sctc {

// Exit-code classes used by the CLI: configuration (1), IO/parse (2),
// numerical (3). Everything else derives from one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public IoError {
 public:
  using IoError::IoError;
};

class LoadError : public IoError {
 public:
  using IoError::IoError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class MissingGradientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace sctc
