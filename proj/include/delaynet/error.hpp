#pragma once

#include <stdexcept>
#include <string>

namespace delaynet {

// Error taxonomy used across the library. The CLI maps these to exit codes:
// config/data/state -> 1, numeric -> 2.

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct state_error : std::runtime_error {
  explicit state_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace delaynet
