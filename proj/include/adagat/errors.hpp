#pragma once

#include <stdexcept>
#include <string>

namespace adagat {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes incompatible with an operation.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument value (bad label, negative epsilon, ...).
struct ValueError : Error {
    using Error::Error;
};

// Malformed or inconsistent configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem and serialization failures; messages carry the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace adagat
