#pragma once

#include <stdexcept>
#include <string>

namespace tg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/array extents do not conform for the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// A configuration value is outside its legal range.
struct ConfigError : Error {
  using Error::Error;
};

// A caller violated an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

// Malformed input file; message carries file/line context.
struct ParseError : Error {
  using Error::Error;
};

// Cloud has too few points or no spatial extent.
struct DegenerateCloudError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Optimization diverged (non-finite loss).
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace tg
