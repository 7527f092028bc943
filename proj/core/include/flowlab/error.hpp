#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

/// Bad input, violated precondition, malformed file. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Divergence, blow-up, non-finite values. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace flowlab
