#pragma once

#include <stdexcept>
#include <string>

namespace cloneforge {

/// A loss or score went non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cloneforge
