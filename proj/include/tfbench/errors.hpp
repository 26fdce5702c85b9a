#pragma once

#include <stdexcept>
#include <string>

namespace tfbench {

// Root of every error the library throws. Callers that only care about
// "something went wrong in the benchmark" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A precondition on a call was violated (wrong window length, non-scalar
// loss, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A softmax row had every position masked out.
class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfbench
