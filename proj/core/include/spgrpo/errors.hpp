#pragma once

#include <stdexcept>
#include <string>

namespace spgrpo {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions disagree (matrix shapes, cache/parameter mismatch).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A computed value became NaN or infinite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Sampling or training rollout aborted.
class RolloutError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace spgrpo
