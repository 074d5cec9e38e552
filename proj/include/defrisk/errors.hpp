#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace defrisk {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NewtonDivergence : public std::runtime_error {
 public:
  NewtonDivergence(std::size_t step, double residual)
      : std::runtime_error("Newton iteration failed at time step " + std::to_string(step) +
                           " (residual max-norm " + std::to_string(residual) + ")"),
        step_(step),
        residual_(residual) {}
  std::size_t step() const noexcept { return step_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t step_;
  double residual_;
};

class RadicandNegative : public std::runtime_error {
 public:
  RadicandNegative(std::size_t node, double value)
      : std::runtime_error("insurance rate radicand " + std::to_string(value) + " at node " +
                           std::to_string(node)),
        node_(node),
        value_(value) {}
  std::size_t node() const noexcept { return node_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t node_;
  double value_;
};

class WindowViolation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace defrisk
