#pragma once

#include <stdexcept>
#include <string>

namespace tsb {

// Exit-code families used by the command-line tool.
enum class ErrorKind {
  Usage,        // bad arguments, unknown field, malformed input file
  Infeasible,   // infeasible or degenerate input (no boundary, single class, ...)
  Numerical,    // singular matrices, blow-up, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed case/config/artifact text. The message names the offending field.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

/// Structurally well-formed input that violates a model invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

/// A precondition of an operation was not met by the caller.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

/// Network topology problems, e.g. a trip that islands part of the grid.
class TopologyError : public Error {
 public:
  explicit TopologyError(const std::string& what) : Error(ErrorKind::Infeasible, what) {}
};

/// Operating point without a converged, statically feasible power flow.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(ErrorKind::Infeasible, what) {}
};

/// Data contains a single class, so no boundary exists to learn or sample.
class NoBoundaryError : public Error {
 public:
  explicit NoBoundaryError(const std::string& what) : Error(ErrorKind::Infeasible, what) {}
};

/// Zero gradient where a descent direction is required.
class StationaryPointError : public Error {
 public:
  explicit StationaryPointError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

}  // namespace tsb
