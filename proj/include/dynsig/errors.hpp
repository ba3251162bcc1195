#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dynsig {

// Base of every error thrown by the library. Each subclass maps to one
// failure category; the CLI translates categories into exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix dimensions disagree with the game specification.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument violates a documented precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A matrix that must be inverted is singular (or not positive definite).
class SingularityError : public Error {
 public:
  using Error::Error;
};

// A convex stage problem has no minimizer (Hessian not positive definite).
class UnboundedError : public Error {
 public:
  using Error::Error;
};

// Structural hypotheses of a solver (e.g. diagonal dynamics) do not hold.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

// Quantizer bins do not cover the support of the source.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// A solver was applied to the wrong kind of game (e.g. a channel is present
// where a cheap-talk game is required).
class WrongGameError : public Error {
 public:
  using Error::Error;
};

// An iterative method failed to converge. Carries the residual trace.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

// A computed equilibrium failed its own verification step.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynsig
