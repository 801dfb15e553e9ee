#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmsb {

/// Invalid architecture, schedule, or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf showed up where only finite values are allowed.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::vector<std::size_t> indices = {})
      : std::runtime_error(what), indices_(std::move(indices)) {}

  /// Offending row or element indices, when known.
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

 private:
  std::vector<std::size_t> indices_;
};

/// The SDE state became non-finite during simulation.
class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dmsb
