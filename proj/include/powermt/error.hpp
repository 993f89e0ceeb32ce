#pragma once

#include <stdexcept>
#include <string>

namespace powermt {

/// Invalid argument or malformed input. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures of an iterative numerical method (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The supplied interval does not bracket a sign change.
class BracketError : public NumericalError {
public:
  BracketError(const std::string& what, double lo, double hi, double f_lo, double f_hi)
      : NumericalError(what), lo_(lo), hi_(hi), f_lo_(f_lo), f_hi_(f_hi) {}

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double f_lo() const noexcept { return f_lo_; }
  double f_hi() const noexcept { return f_hi_; }

private:
  double lo_, hi_, f_lo_, f_hi_;
};

/// Iteration cap hit. Carries the best iterate seen.
class ConvergenceError : public NumericalError {
public:
  ConvergenceError(const std::string& what, double best, double residual, int iterations)
      : NumericalError(what), best_(best), residual_(residual), iterations_(iterations) {}

  double best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double best_;
  double residual_;
  int iterations_;
};

/// A requested size lies outside the range reachable by the size map.
class SaturationError : public NumericalError {
public:
  SaturationError(const std::string& what, double attainable)
      : NumericalError(what), attainable_(attainable) {}

  /// Largest size reachable for the hypothesis in question.
  double attainable() const noexcept { return attainable_; }

private:
  double attainable_;
};

}  // namespace powermt
