#pragma once

#include <stdexcept>
#include <string>

namespace msset {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Structurally invalid input (dataset invariants, bad files).
struct ValidationError : Error {
    using Error::Error;
};

// Malformed input file; message carries the line number where known.
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// A numeric procedure cannot produce a usable result.
struct ComputationError : Error {
    using Error::Error;
};

}  // namespace msset
