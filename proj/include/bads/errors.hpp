#pragma once

#include <stdexcept>
#include <string>

namespace bads {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problem validation and coordinate mapping.
struct DimensionMismatch : Error {
    using Error::Error;
};
struct InvalidBounds : Error {
    using Error::Error;
};
struct StartOutOfBounds : Error {
    using Error::Error;
};
struct OutOfBounds : Error {
    using Error::Error;
};

struct InvalidOptions : Error {
    using Error::Error;
};

// Surrogate fitting.
struct NonPositiveDefinite : Error {
    using Error::Error;
};
struct FitFailed : Error {
    using Error::Error;
};

/// Raised when an evaluation is requested with no budget left. The optimizer
/// catches it internally and terminates cleanly; it never escapes optimize().
struct BudgetExhausted : Error {
    BudgetExhausted() : Error("evaluation budget exhausted") {}
};

}  // namespace bads
