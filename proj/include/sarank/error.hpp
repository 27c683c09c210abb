#pragma once

#include <stdexcept>
#include <string>

namespace sarank {

// Base of every error raised by the library. The CLI maps each subclass to an
// exit code, so new subclasses must be added to the mapping in cli.cpp.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite input, parameter out of range, dimension mismatch.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A normalizer or coefficient that would divide by zero (Phi(-g) == 0, or
// Phi(-g) == Phi(g) for the hard-margin coefficient).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// A bound or operation precondition that the inputs do not satisfy.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class NotTrainableError : public Error {
 public:
  using Error::Error;
};

class WitnessInvalidError : public Error {
 public:
  using Error::Error;
};

}  // namespace sarank
