#pragma once

#include <stdexcept>
#include <string>

namespace guidelearn {

// Invalid configuration or missing artifact. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss, gradient or model output. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace guidelearn
