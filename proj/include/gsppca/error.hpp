#ifndef GSPPCA_ERROR_HPP
#define GSPPCA_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsppca {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (x <= 0, NaN, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Malformed or inconsistent arguments (sizes, ranges, counts).
class ArgumentError : public Error {
public:
  using Error::Error;
};

/// Unusable input data: non-finite entries, too few rows, ragged files.
class DataError : public Error {
public:
  using Error::Error;
};

/// A density was evaluated exactly at a singular point.
class SingularPointError : public DomainError {
public:
  using DomainError::DomainError;
};

/// Cholesky or a similar factorization failed during an iterative fit.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Noise variance estimate collapsed to zero or exceeded the signal.
class DegenerateNoiseError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// An M-step produced an unusable parameter value.
class DegenerateUpdateError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// An observation has an all-zero active block, so its evidence term diverges.
class DegenerateRowError : public NumericalError {
public:
  DegenerateRowError(std::size_t row, const std::string& what)
      : NumericalError(what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

/// Every model on the selection path failed.
class SelectionError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace gsppca

#endif  // GSPPCA_ERROR_HPP
