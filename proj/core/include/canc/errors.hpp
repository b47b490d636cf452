#pragma once

#include <stdexcept>
#include <string>

namespace canc {

/// Invalid configuration: bad dimensions, out-of-range rates, malformed config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or malformed input data (dataset files, scene rasters).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite activation, loss or gradient.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : std::runtime_error(what), layer_(layer) {}

  /// Index of the offending layer, or -1 when not attributable to a layer.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

}  // namespace canc
