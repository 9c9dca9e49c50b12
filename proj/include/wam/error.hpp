#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// An input that is valid in shape but numerically unusable (e.g. a zero
// probability where a strictly positive one is required).
class DegenerateInput : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

// Sinkhorn scaling did not reach the requested marginal tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

// Kernel underflow or non-finite scaling vectors.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Failure while running the assignment flow; names the edge when one is at
// fault.
class FlowError : public Error {
 public:
  static constexpr std::size_t no_edge = static_cast<std::size_t>(-1);

  FlowError(const std::string& what, std::size_t edge = no_edge, bool numerical = true)
      : Error(what), edge_(edge), numerical_(numerical) {}

  std::size_t edge() const { return edge_; }
  bool numerical() const { return numerical_; }

 private:
  std::size_t edge_;
  bool numerical_;
};

}  // namespace wam
