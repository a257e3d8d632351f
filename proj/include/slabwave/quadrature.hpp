#pragma once

#include <cmath>
#include <complex>

#include "slabwave/errors.hpp"

namespace slabwave {

struct QuadratureResult {
    std::complex<double> value;
    double error_estimate;
    int levels_used;
};

/// Tanh-sinh (double-exponential) quadrature on a finite interval (a, b).
/// Endpoint singularities of algebraic/logarithmic type are handled
/// spectrally: abscissas are accumulated from the nearest endpoint so the
/// integrand sees the distance to the endpoint at full relative precision.
/// Refines by level doubling until two consecutive levels agree to `tol`
/// (absolute, relative to max(1, |I|)).
template <typename F>
QuadratureResult tanh_sinh(F&& f, double a, double b, double tol, int max_level = 12) {
    const double half = 0.5 * (b - a);
    const double tmax = 6.1; // sinh(6.1) ~ 222: offsets reach ~1e-300

    std::complex<double> prev(0.0, 0.0);
    double prev_gap = 0.0;
    for (int level = 2; level <= max_level; ++level) {
        const double step = tmax / std::ldexp(1.0, level);
        std::complex<double> sum(0.0, 0.0);
        const long kmax = static_cast<long>(std::ldexp(1.0, level));
        for (long k = -kmax; k <= kmax; ++k) {
            const double t = static_cast<double>(k) * step;
            const double sh = 0.5 * M_PI * std::sinh(t);
            // offset = 1 - |tanh(sh)| without cancellation
            const double ex = std::exp(-2.0 * std::abs(sh));
            const double offset = 2.0 * ex / (1.0 + ex);
            if (offset < 1e-290) continue;
            const double ch = std::cosh(sh);
            const double w = 0.5 * M_PI * std::cosh(t) / (ch * ch) * step;
            if (w < 1e-300) continue;
            // abscissa measured from the nearest endpoint
            const double x = (t < 0.0) ? a + half * offset : b - half * offset;
            sum += w * f(x);
        }
        sum *= half;
        const double gap = std::abs(sum - prev);
        if (level > 3 && gap <= tol * std::max(1.0, std::abs(sum))) {
            return {sum, gap, level};
        }
        prev = sum;
        prev_gap = gap;
    }
    throw numeric_error("tanh_sinh: no convergence within level budget", prev_gap);
}

} // namespace slabwave
