#pragma once

#include <stdexcept>
#include <string>

namespace amlrec {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input (CSV cell, JSON document, trace line).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Structurally readable input that violates a data invariant
/// (duplicate ids, out-of-range index, non-finite score, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Bad argument to a library call: dimension mismatch, out-of-range
/// value, and similar caller mistakes.
class ArgumentError : public Error {
public:
  using Error::Error;
};

/// Nothing left to select: every candidate has already been evaluated.
class ExhaustionError : public Error {
public:
  using Error::Error;
};

/// Linear-algebra failure: the covariance did not admit a Cholesky
/// factorization even after jitter escalation.
class NumericError : public Error {
public:
  NumericError(const std::string& what, double attempted_jitter)
      : Error(what), attempted_jitter_(attempted_jitter) {}

  double attempted_jitter() const { return attempted_jitter_; }

private:
  double attempted_jitter_ = 0.0;
};

/// Non-finite loss encountered while fitting; carries the epoch and the
/// dataset column being processed (column -1 means the end-of-epoch pass).
class TrainError : public Error {
public:
  TrainError(const std::string& what, int epoch, int column)
      : Error(what + " (epoch " + std::to_string(epoch) + ", column " +
              std::to_string(column) + ")"),
        epoch_(epoch), column_(column) {}

  int epoch() const { return epoch_; }
  int column() const { return column_; }

private:
  int epoch_ = 0;
  int column_ = 0;
};

} // namespace amlrec
