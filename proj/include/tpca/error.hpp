#pragma once

#include <stdexcept>
#include <string>

namespace tpca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument shapes disagree (vector length vs. axis dimension, unequal dims, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on a scalar or configuration value is violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A computed value is NaN or infinite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// T(:,v,v) vanished, so the next power iterate is undefined. Callers
/// regenerate the initialization.
class DegenerateDirection : public Error {
 public:
  using Error::Error;
};

/// Operation is not defined for the given tensor order.
class Unsupported : public Error {
 public:
  using Error::Error;
};

/// Closed-form expression hits its singular point.
class SingularCase : public Error {
 public:
  using Error::Error;
};

/// File or stream failure; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E = InvalidArgument>
inline void require(bool ok, const std::string& what) {
  if (!ok) throw E(what);
}

}  // namespace detail
}  // namespace tpca
