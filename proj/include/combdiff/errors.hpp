#pragma once

#include <stdexcept>
#include <string>

namespace combdiff {

// Base class for all failures raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Root finder or iterative scheme exhausted its iteration budget.
class NonConvergence : public Error {
public:
    using Error::Error;
};

// Operation requested exactly at a half-integer momentum where the
// dispersion branch is ambiguous and no snap rule applies.
class LatticePoint : public Error {
public:
    using Error::Error;
};

// Truncated lattice sum failed to reach its tail target at the cap.
class TruncationInsufficient : public Error {
public:
    using Error::Error;
};

// Adaptive quadrature could not reach the requested tolerance.
class QuadratureFailure : public Error {
public:
    using Error::Error;
};

// Wavefunction window too small for the requested operation.
class WindowOverflow : public Error {
public:
    using Error::Error;
};

// Importance weight spread exceeded the configured safety bound.
class WeightBlowup : public Error {
public:
    using Error::Error;
};

// Time stepper produced a non-finite or norm-violating state.
class StabilityViolation : public Error {
public:
    using Error::Error;
};

// Estimator invoked with too few samples/events to be meaningful.
class InsufficientSample : public Error {
public:
    using Error::Error;
};

} // namespace combdiff
