#pragma once

#include <stdexcept>
#include <string>

namespace vhs2hd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public IoError {
 public:
  using IoError::IoError;
};

class EmptySourceError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Raised after repeated non-finite training steps.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace vhs2hd
