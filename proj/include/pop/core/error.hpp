#pragma once

#include <stdexcept>
#include <string>

namespace pop {

// Tensor or container shapes that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A UV coordinate that does not lie in a valid island cell.
class OutOfManifoldError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Binary container with a bad magic, header or truncated payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text file that could not be parsed; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Numerical failure during optimization (NaN gradients, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pop
