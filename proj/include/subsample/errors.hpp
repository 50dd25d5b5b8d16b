#pragma once

#include <stdexcept>
#include <string>

namespace subsample {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidProbability : public Error {
 public:
  using Error::Error;
};

class DuplicateKey : public Error {
 public:
  using Error::Error;
};

class KeyNotFound : public Error {
 public:
  using Error::Error;
};

// A bounded resource (table budget, enumeration size) would be exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised by the block device when an algorithm pins more frames than M/B.
// This is a bug in the caller, not an input problem.
class FrameBudgetExceeded : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Rejects NaN and anything outside [0,1].
inline double checked_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw InvalidProbability("probability out of [0,1]: " + std::to_string(p));
  return p;
}

}  // namespace subsample
