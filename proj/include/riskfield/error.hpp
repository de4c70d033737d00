#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riskfield {

/// Thrown when a caller hands in a value outside an operation's domain
/// (non-finite state, nonpositive step, empty centerline, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Carries the 1-based line (or row) that failed, 0 if unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string{}) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline void require(bool ok, const char* message) {
  if (!ok) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace riskfield
