#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace repro {

/// Raised for NaN/Inf inputs and other values outside an operation's domain.
/// When the offending value came from a sequence, `index()` names its position.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

/// Raised when the summation state cannot represent the input any more:
/// the top level would have to move above the format's largest exponent, or a
/// carry counter would stop holding an exact integer.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Raised when parameters or operands violate a documented precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace repro
