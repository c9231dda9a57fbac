#pragma once

#include <stdexcept>
#include <string>

namespace surfflow {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RootError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CFLViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace surfflow
