#pragma once

#include <stdexcept>
#include <string>

namespace clie {

// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input lies outside the domain of a function (log of a non-positive entry,
// a hidden state on the boundary of (-1,1)^D, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A calling contract was violated (non-scalar backward root, double backward).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration value or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed data: bad partitions, empty corpora, vocabulary mismatches.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clie
