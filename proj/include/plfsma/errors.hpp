#pragma once

#include <stdexcept>
#include <string>

namespace plfsma {

// Caller broke a documented precondition (bad dimensions, asymmetric input, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// User-facing configuration problem: bad flag, bandwidth too small, rank too low.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file could not be parsed or failed validation.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iterative routine failed to converge or hit a degenerate numeric state.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ContractViolation(message);
    }
}

}  // namespace plfsma
