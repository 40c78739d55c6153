#pragma once

#include <stdexcept>
#include <string>

namespace shallow {

// Base for every error raised by the library. The CLI maps ConfigError to
// exit code 2 and everything numerical to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Requested dense object exceeds the desk-scale cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, long iteration)
      : NumericalError(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

class DegenerateInputError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DecompositionError : public NumericalError {
 public:
  DecompositionError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace shallow
