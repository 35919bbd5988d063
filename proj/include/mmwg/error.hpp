#pragma once

#include <stdexcept>
#include <string>

namespace mmwg {

/// Input or contract violation (bad file, bad config, bad argument).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmwg
