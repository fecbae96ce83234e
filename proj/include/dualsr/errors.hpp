#pragma once

#include <stdexcept>
#include <string>

namespace dualsr {

// Violated precondition of a public operation (bad index, wrong shape, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Invalid configuration file, unknown key or variant name.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data. Carries the offending 1-based line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class EmptyDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateSpanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf during training; the CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualsr
