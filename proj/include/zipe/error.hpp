#pragma once

#include <stdexcept>
#include <string>

namespace zipe {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed case text (bad JSON, wrong field types).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a data-model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Newton or fixed-point iteration failed to converge.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, int iterations, double mismatch)
        : Error(what), iterations_(iterations), mismatch_(mismatch) {}

    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }

private:
    int iterations_;
    double mismatch_;
};

/// A linear system in an iteration could not be factored.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& what, int iteration, double rcond)
        : Error(what), iteration_(iteration), rcond_(rcond) {}

    int iteration() const noexcept { return iteration_; }
    double rcond() const noexcept { return rcond_; }

private:
    int iteration_;
    double rcond_;
};

/// The algebraic Jacobian block g_y is numerically singular.
class AlgebraicSingularityError : public Error {
public:
    explicit AlgebraicSingularityError(double condition)
        : Error("algebraic singularity: cond(g_y) = " + std::to_string(condition)),
          condition_(condition) {}

    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Bus voltage fell below the floor used for constant-power current conversion.
class VoltageFloorError : public Error {
public:
    using Error::Error;
};

/// No real operating point exists for a device at the requested terminal conditions.
class InfeasibleOperatingPoint : public Error {
public:
    using Error::Error;
};

/// Initialization could not zero the model residual.
class InitializationError : public Error {
public:
    using Error::Error;
};

}  // namespace zipe
