#pragma once

#include <stdexcept>
#include <string>

namespace pvfault {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid architecture, augmentation, or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem, decode, or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Loss became NaN/Inf during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvfault
