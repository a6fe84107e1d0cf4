#pragma once

#include <stdexcept>
#include <string>

namespace kam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A quantitative hypothesis does not hold. `inequality()` names it.
class ThresholdError : public Error {
 public:
  ThresholdError(std::string inequality, const std::string& what)
      : Error(what), inequality_(std::move(inequality)) {}
  const std::string& inequality() const { return inequality_; }

 private:
  std::string inequality_;
};

/// Floating point machinery failed: divergent series, missing certificate,
/// resonance, non-convergent Newton, under-resolved grid.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ResonanceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CertificationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace kam
