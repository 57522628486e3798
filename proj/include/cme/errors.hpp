#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cme {

// Precondition violated by the caller (bad sizes, empty inputs, invalid config).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operand shapes disagree (channel count, grid size, bank size).
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// A memory bank could not be built because no pixel carried a usable key.
class EmptyBankError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Malformed input file. `where` names the field or value offset at fault.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cme
