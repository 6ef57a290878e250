#pragma once

#include <stdexcept>
#include <string>

namespace crplus {

/// Malformed input, failed validation, or an invalid request (unknown obligor,
/// duplicate scenario ids, ...). The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical tolerance could not be met. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probability mass beyond the truncation limit exceeds the configured tolerance.
class TruncationError : public NumericalError {
public:
    TruncationError(const std::string& what, double tail_mass, double tolerance)
        : NumericalError(what), tail_mass_(tail_mass), tolerance_(tolerance) {}

    double tail_mass() const noexcept { return tail_mass_; }
    double tolerance() const noexcept { return tolerance_; }

private:
    double tail_mass_;
    double tolerance_;
};

}  // namespace crplus
