#pragma once

#include <stdexcept>
#include <string>

namespace ream {

// Input that violates a documented precondition or invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed serialized data. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingEmbeddingError : public std::runtime_error {
 public:
  explicit MissingEmbeddingError(const std::string& key)
      : std::runtime_error("no cached embedding for key " + key), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Remote encoder unreachable, timed out or answered with a non-200 status.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not allowed in the object's current state (e.g. a decision on a
// finished annotation session).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ream
