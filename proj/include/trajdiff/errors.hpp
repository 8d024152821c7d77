// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trajdiff {

// Error taxonomy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters, unknown names, malformed files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, singular coefficients, diverged training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Inputs that make a quantity undefined (constant vectors, all-masked rows).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DegenerateError*>(&e)) return 4;
  return 2;
}

}  // namespace trajdiff
