#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epi {

/// Base of every error raised by the library. The C API maps each subclass
/// onto a distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A value outside the support of a distribution's parameters.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  explicit ParseError(const std::string& what) : Error(what), offset_(npos) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedTopology : public ParseError {
 public:
  UnsupportedTopology(const std::string& what, std::size_t offset) : ParseError(what, offset) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class TuningFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace epi
