#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ptmatch {

// Error taxonomy shared by every module. The CLI maps these to exit codes:
// config/usage/io/domain problems -> 2, training divergence -> 3,
// verification failures -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

struct DegenerateInputError : Error {
  using Error::Error;
};

struct LabelError : Error {
  using Error::Error;
};

struct AnalysisError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  std::size_t epoch;
  std::size_t step;
  DivergenceError(const std::string& msg, std::size_t epoch_in, std::size_t step_in)
      : Error(msg + " (epoch " + std::to_string(epoch_in) + ", step " +
              std::to_string(step_in) + ")"),
        epoch(epoch_in),
        step(step_in) {}
};

}  // namespace ptmatch
