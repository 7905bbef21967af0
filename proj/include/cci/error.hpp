#pragma once

#include <stdexcept>
#include <string>

namespace cci {

// Bad argument or configuration value. Messages name the offending field.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A sample source could not produce a sample (network, HTTP, decode).
class GeneratorFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Response body from a live endpoint did not have the expected shape.
class DecodeError : public GeneratorFailure {
 public:
  using GeneratorFailure::GeneratorFailure;
};

}  // namespace cci
