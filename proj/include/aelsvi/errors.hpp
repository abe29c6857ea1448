#pragma once

#include <stdexcept>
#include <string>

namespace aelsvi {

// Bad arguments: dimension mismatches, unknown labels, out-of-range indices.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Factorization failures and variances that are negative beyond round-off.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a run configuration fails validation.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace aelsvi
