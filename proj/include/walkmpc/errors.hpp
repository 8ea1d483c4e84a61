#pragma once

#include <stdexcept>
#include <string>

namespace walkmpc {

/// Input outside the mathematical domain of an operation (bad parameters,
/// probabilities outside (0,1), non-finite results).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Feedback synthesis failed (uncontrollable pair).
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration file or flag could not be turned into valid settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace walkmpc
