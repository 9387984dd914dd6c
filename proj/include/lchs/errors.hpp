#pragma once

#include <stdexcept>
#include <string>

namespace lchs {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, NumericalError -> 3, CapError -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct CapError : std::runtime_error {
    explicit CapError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lchs
