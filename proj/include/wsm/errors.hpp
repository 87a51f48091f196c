#pragma once

#include <stdexcept>
#include <string>

namespace wsm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (non-scalar loss, wrong list length, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf showed up in a computed value.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

// CTC target cannot be emitted in the available number of frames.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

class GroupingError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace wsm
