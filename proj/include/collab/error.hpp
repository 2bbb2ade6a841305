#pragma once

#include <stdexcept>
#include <string>

namespace collab {

// Error taxonomy. The CLI maps these onto exit codes:
//   ConfigError/DimensionError -> 2, FormatError family -> 3, NumericError -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or rank mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration value or combination (e.g. scaled-dot with m != k).
struct ConfigError : Error {
    using Error::Error;
};

// Operation called out of order (e.g. backward before any forward).
struct StateError : Error {
    using Error::Error;
};

// Malformed persisted data. Subclasses keep load failures distinguishable.
struct FormatError : Error {
    using Error::Error;
};
struct VersionError : FormatError {
    using FormatError::FormatError;
};
struct TruncatedError : FormatError {
    using FormatError::FormatError;
};
struct ShapeError : FormatError {
    using FormatError::FormatError;
};

// A simulated peer failed to respond during a handshake stage.
struct TimeoutError : Error {
    using Error::Error;
};

// Metric undefined for the given inputs (e.g. zero bandwidth).
struct MetricError : Error {
    using Error::Error;
};

// Non-finite value where the computation requires finite ones.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace collab
