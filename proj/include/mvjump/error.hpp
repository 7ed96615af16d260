#pragma once

#include <stdexcept>
#include <string>

namespace mvjump {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or configuration violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-finite state or other numeric blow-up during a run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvjump
