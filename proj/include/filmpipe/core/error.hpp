#pragma once

#include <stdexcept>
#include <string>

namespace filmpipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violation on an argument (shape, channel count, range).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Not enough geometric evidence to register an image pair.
class AlignmentInfeasibleError : public Error {
 public:
  using Error::Error;
};

/// A pretrained network (feature extractor or learned metric) has no weights on disk.
class UnavailableError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration is inconsistent with the data or a checkpoint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace filmpipe
