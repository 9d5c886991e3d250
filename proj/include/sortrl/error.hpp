#pragma once

#include <stdexcept>
#include <string>

namespace sortrl {

// Violated precondition or broken type invariant; a bug at the call site.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed or incompatible on-disk data (checkpoints, manifests, spec files).
class DataFormatError : public std::runtime_error {
 public:
  explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN or Inf surfaced during optimization; training cannot continue.
class NumericalDivergence : public std::runtime_error {
 public:
  explicit NumericalDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool condition, const std::string& msg) {
  if (!condition) throw ContractViolation(msg);
}

}  // namespace sortrl
