#pragma once

#include <stdexcept>
#include <string>

namespace binval {

// Invalid configuration or parameters (CLI maps this to exit code 2).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Anything that goes wrong after configuration was accepted (exit code 1).
class runtime_failure : public std::runtime_error {
public:
    explicit runtime_failure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace binval
