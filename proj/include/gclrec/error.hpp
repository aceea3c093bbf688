#pragma once

#include <stdexcept>
#include <string>

namespace gclrec {

// Exit codes reported by the command line tool.
enum class ExitCode : int {
  kOk = 0,
  kGeneric = 1,
  kConfig = 2,
  kNumerical = 3,
  kBudget = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kGeneric)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid configuration, arguments or preconditions.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")", ExitCode::kConfig), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what, ExitCode::kConfig), line_(0) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values, divergence, degenerate geometry.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumerical) {}
};

// Attack budget cannot be honoured or an emitted profile violates it.
class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what) : Error(what, ExitCode::kBudget) {}
};

}  // namespace gclrec
