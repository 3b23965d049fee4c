#pragma once

#include <stdexcept>
#include <string>

namespace bevnet {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
    using Error::Error;
};

// Malformed input data (bad file length, unparsable pose line, ...).
struct FormatError : Error {
    using Error::Error;
};

// Tensor/feature dimension disagreement.
struct ShapeError : Error {
    using Error::Error;
};

// Numerically degenerate input (zero-norm descriptor, rank-deficient fit, ...).
struct DegenerateError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

// backward() without a recorded forward pass, or reuse of a cleared tape.
struct TapeError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace bevnet
