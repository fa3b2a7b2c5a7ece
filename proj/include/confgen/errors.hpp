#pragma once

#include <stdexcept>
#include <string>

namespace confgen {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (JSON lines, config files). Carries file/line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally well-formed input that violates a contract (index out of
// range, atom-count mismatch, duplicate edges, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad key or value in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tape construction failure: nonconforming shapes, bad slice bounds, bad
// indices, or a seed that does not belong to the tape.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Rigid alignment requested on a point set too small to align.
class DegenerateAlignmentError : public Error {
 public:
  using Error::Error;
};

// Inner optimization blew up (objective above threshold or non-finite).
class DivergedError : public Error {
 public:
  using Error::Error;
};

// ODE integration produced a non-finite state.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

// Generic numerical failure (NaN inputs, non-finite gradients, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace confgen
