#pragma once

#include <stdexcept>
#include <string>

namespace thinserve {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes, so new error kinds should derive from one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV rows, topology strings, trace files).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// No multiset of profiled items satisfies the requested <T, B>.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// A configuration references a (threads, batch) cell the profile lacks.
class UnknownKeyError : public Error {
 public:
  using Error::Error;
};

class InsufficientCoresError : public Error {
 public:
  using Error::Error;
};

class UnknownInstanceError : public Error {
 public:
  using Error::Error;
};

// Operation not legal in the current state (e.g. empty estimator history).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace thinserve
