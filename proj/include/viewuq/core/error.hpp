#pragma once

#include <stdexcept>
#include <string>

namespace viewuq {

// Base of everything the library throws. Callers that only need to separate
// user mistakes from internal faults can catch these two families.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, out-of-domain argument or malformed user input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// NaN/Inf produced by a forward pass while numeric checking is on.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// File missing, truncated or with an inconsistent header.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace viewuq
