#pragma once

#include <stdexcept>
#include <string>

namespace kdv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array/grid size mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A function argument violates its documented precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class IllConditionedError : public Error {
 public:
  using Error::Error;
};

class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Picard correction stopped contracting.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class StabilizationTimeoutError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kdv
