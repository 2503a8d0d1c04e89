#pragma once

#include <stdexcept>
#include <string>

namespace plan {

// Base error for all library failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or shape contract violations.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid or malformed configuration (files, keys, option values).
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace plan
