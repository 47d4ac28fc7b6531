#pragma once

#include <stdexcept>
#include <string>

namespace bhh {

/// Argument outside the mathematical domain of an operation (t <= 0 for the
/// Green's function, probabilities outside [0,1], ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Only d = 1, 2, 3 give a well-defined random field solution.
class UnsupportedDimension : public DomainError {
public:
    explicit UnsupportedDimension(int d)
        : DomainError("unsupported dimension d=" + std::to_string(d) +
                      ": the random field solution is well-defined only for d=1, 2, 3") {}
};

/// Invalid configuration (sample counts, grids, quadrature orders, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (factorization, inversion, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A request would exceed the memory budget.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bhh
