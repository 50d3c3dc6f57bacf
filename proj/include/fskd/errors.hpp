#pragma once

#include <stdexcept>

namespace fskd {

// Invalid user-facing configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fskd
