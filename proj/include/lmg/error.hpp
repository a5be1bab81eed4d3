#pragma once

#include <stdexcept>
#include <string>

namespace lmg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: a corpus record, embedding line, config key, etc.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Input that parsed but violates a data-model invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Incompatible tensor shapes passed to an op.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Numerical failure during training (NaN loss or gradient).
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// Exact search refused because the problem exceeds its configured size.
class LimitError : public Error {
public:
  using Error::Error;
};

}  // namespace lmg
