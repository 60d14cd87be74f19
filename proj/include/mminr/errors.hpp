#pragma once

#include <stdexcept>
#include <string>

namespace mminr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or corrupt data: negative rain rates, NaN payloads, malformed archives.
class DataIntegrityError : public Error {
 public:
  using Error::Error;
};

// Inconsistent hyperparameters or model/strategy mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or field shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss) or was given unusable data.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mminr
