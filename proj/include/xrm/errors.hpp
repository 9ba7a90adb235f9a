#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xrm {

// Base for every error the toolkit raises. The CLI maps subclasses to exit
// codes: input problems exit 1, I/O and transport problems exit 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed XRMD file. kind() is one of "magic", "version", "metadata",
// "bounds".
class FormatError : public Error {
 public:
  FormatError(std::string kind, const std::string& detail)
      : Error("format error (" + kind + "): " + detail), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed JSON-lines record; line() is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : Error("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MissingTensorError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& detail)
      : Error("diverged at epoch " + std::to_string(epoch) + ": " + detail),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Every judge request in a run failed.
class RunFailedError : public Error {
 public:
  using Error::Error;
};

}  // namespace xrm
