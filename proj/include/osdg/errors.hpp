#pragma once

#include <stdexcept>
#include <string>

namespace osdg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Out-of-range class label or coordinate.
struct IndexError : Error {
    using Error::Error;
};

// Malformed binary file (bad magic, truncated payload, count mismatch).
struct FormatError : Error {
    using Error::Error;
};

// Invalid configuration value or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

// API precondition violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Non-finite value or singular matrix where a finite/SPD one is required.
struct NumericError : Error {
    using Error::Error;
};

// Training diverged or cannot proceed.
struct TrainingError : Error {
    using Error::Error;
};

// Metric undefined for the given inputs (e.g. AUROC with one class empty).
struct MetricError : Error {
    using Error::Error;
};

} // namespace osdg
