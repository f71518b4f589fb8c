#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdelab {

/// Invalid input data: bad parameters, broken invariants, mismatched grids.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical method failed (singular solve, non-convergent quadrature, ...).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probe-based sectoriality certification failed at the requested w.
class SectorialityError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Expression parse failure; carries the offending character offset.
class ExpressionError : public ValidationError {
public:
    ExpressionError(const std::string& what, std::size_t position)
        : ValidationError(what + " at position " + std::to_string(position)),
          position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Time stepping produced a non-finite state.
class SolverAbort : public NumericError {
public:
    SolverAbort(const std::string& what, std::size_t step)
        : NumericError(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Picard iteration failed to contract.
class PicardDivergence : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace spdelab
