#pragma once

#include <stdexcept>
#include <string>

namespace rsts {

// Model evaluation produced a non-finite value.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Normal equations of a least-squares problem are singular.
class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A design-derived matrix (Sigma_n or the pencil denominator) is not positive definite.
class SingularDesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few usable individuals or replicates to form an estimate.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file or config problem. `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rsts
