#pragma once

#include <stdexcept>
#include <string>

namespace phgr {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite or out-of-domain numeric input.
struct DomainError : Error {
  using Error::Error;
};

// Incompatible tensor/matrix shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed or insufficient input data (parsing, splits, graphs).
struct DataError : Error {
  using Error::Error;
};

// Broken caller contract (e.g. backward on a non-scalar loss).
struct ContractError : Error {
  using Error::Error;
};

// Filesystem / stream failures.
struct IoError : Error {
  using Error::Error;
};

// Non-finite loss or violated numerical property at runtime.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace phgr
