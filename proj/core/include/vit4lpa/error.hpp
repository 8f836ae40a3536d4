#pragma once

#include <stdexcept>
#include <string>

namespace vit4lpa {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; the message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Violated operation precondition (empty input, non-scalar loss, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid configuration: unknown key, bad value, indivisible geometry.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem or serialization failure; the message carries the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace vit4lpa
