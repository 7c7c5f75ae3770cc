#pragma once

#include <stdexcept>
#include <string>

namespace agepatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario document (not valid JSON, wrong value types).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Document is well-formed but violates the scenario schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A request that does not fit the scenario (wrong environment kind,
/// off-grid time, infeasible step size).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Cohort integration produced a negative value or blew up.
class IntegrationFailure : public Error {
 public:
  using Error::Error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

/// Results that contradict each other, e.g. a crossed fixed-point bracket.
class NumericalInconsistency : public Error {
 public:
  using Error::Error;
};

}  // namespace agepatch
