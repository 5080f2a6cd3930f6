#pragma once

#include <stdexcept>

namespace tgg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// A value is outside its admissible range (negative weight, zero row, ...).
struct ValueError : Error {
  using Error::Error;
};

// Singular or near-singular linear system.
struct ConditioningError : Error {
  using Error::Error;
};

// Malformed input file.
struct ParseError : Error {
  using Error::Error;
};

// Well-formed input that contradicts the data model (unknown class, ...).
struct SchemaError : Error {
  using Error::Error;
};

// A dataset invariant does not hold.
struct InvariantError : Error {
  using Error::Error;
};

// Invalid experiment configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A node has no neighbor candidates.
struct ConnectivityError : Error {
  using Error::Error;
};

// An episode cannot be assembled from the available instances.
struct EpisodeError : Error {
  using Error::Error;
};

}  // namespace tgg
