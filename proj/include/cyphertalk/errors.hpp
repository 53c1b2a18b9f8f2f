#pragma once

#include <stdexcept>
#include <string>

namespace cyphertalk {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (empty operator set, V=0, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Bad runtime input (token id out of range, dimension mismatch).
struct InputError : Error {
  using Error::Error;
};

// Malformed or incompatible on-disk artifact.
struct FormatError : Error {
  enum class Kind { BadMagic, BadVersion, Truncated, BadChecksum, Invariant };
  Kind kind;
  FormatError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Non-finite values encountered during evaluation or training.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace cyphertalk
