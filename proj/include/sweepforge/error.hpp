#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sweepforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One problem found while reading a configuration file. Line and column are
/// 1-based; column 0 means "whole line".
struct Diagnostic {
  std::size_t line = 0;
  std::size_t column = 0;
  std::string message;

  std::string to_string() const {
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + message;
  }
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<Diagnostic> diags)
      : Error(join(diags)), diagnostics_(std::move(diags)) {}
  explicit ConfigError(const std::string& message)
      : ConfigError(std::vector<Diagnostic>{{0, 0, message}}) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string join(const std::vector<Diagnostic>& diags) {
    std::string out;
    for (const auto& d : diags) {
      if (!out.empty()) out += '\n';
      out += d.line > 0 ? d.to_string() : d.message;
    }
    return out;
  }

  std::vector<Diagnostic> diagnostics_;
};

/// Raised by expression parsing or evaluation (division by zero, log of a
/// non-positive number, unknown binding, ...).
class ExprError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { corrupt, incompatible_version, malformed, truncated, mismatch };

  CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid use of a network structure: unknown ids, non-member endpoints, ...
class NetworkError : public Error {
 public:
  using Error::Error;
};

}  // namespace sweepforge
