#pragma once

#include <stdexcept>
#include <string>

namespace qdn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid tensor dimensions or incompatible shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range element or channel access.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Malformed graph, manifest, or a graph used in the wrong mode
// (e.g. float forward on a quantized model).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Dataset or file-format problems.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad key=value config or CLI arguments beyond parser-level errors.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qdn
