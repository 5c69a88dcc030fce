#pragma once

#include <stdexcept>
#include <string>

namespace hardtsp {

/// Base class for all library failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tour is not a permutation of the instance's nodes.
struct InvalidTourError : Error {
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

/// A reported cost undercuts the oracle optimum beyond tolerance.
struct OracleViolationError : Error {
    using Error::Error;
};

/// Instance too large for the requested solver.
struct SizeLimitError : Error {
    using Error::Error;
};

/// Zero coordinate range in some dimension; min-max projection undefined.
struct DegenerateInstanceError : Error {
    int dimension;
    DegenerateInstanceError(const std::string& msg, int dim) : Error(msg), dimension(dim) {}
};

/// Incompatible tensor shapes.
struct ShapeError : Error {
    using Error::Error;
};

/// Non-finite value produced by a forward op.
struct NumericError : Error {
    using Error::Error;
};

/// API misuse (backward on non-scalar, consumed tape, mismatched lengths).
struct ContractError : Error {
    using Error::Error;
};

/// Invalid or inconsistent configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Checkpoint or dataset file cannot be read or written.
struct IoError : Error {
    using Error::Error;
};

} // namespace hardtsp
