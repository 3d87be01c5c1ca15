#pragma once

#include <stdexcept>
#include <string>

namespace softbci {

// Base for every error raised by the pipeline. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, scenario, or input-file header.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed data row. Carries the 1-based line number of the offending row.
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Non-finite sample entering the signal chain.
class SignalIntegrityError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Plant state became non-finite.
class SimulationFault : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace softbci
