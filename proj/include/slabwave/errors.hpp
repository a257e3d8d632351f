#pragma once

#include <stdexcept>
#include <string>

namespace slabwave {

/// Invalid argument or precondition violation (bad geometry, out-of-range
/// inputs, mismatched lattices).
class domain_error : public std::invalid_argument {
public:
    explicit domain_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical failure: quadrature did not converge, iteration hit its cap,
/// linear solve unusable.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
    numeric_error(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_error(achieved) {}
    double achieved_error = 0.0;
};

/// Spectral parameter sits on (or too close to) a mode threshold where the
/// modal resolvent is singular.
class threshold_error : public domain_error {
public:
    explicit threshold_error(const std::string& what) : domain_error(what) {}
};

/// Geometry places an eigen-wavenumber on a mode threshold; the caller must
/// perturb R or L.
class geometry_rejection : public domain_error {
public:
    explicit geometry_rejection(const std::string& what) : domain_error(what) {}
};

} // namespace slabwave
