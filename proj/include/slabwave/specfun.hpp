#pragma once

#include <complex>

namespace slabwave::specfun {

using Cplx = std::complex<double>;

enum class KernelPath { series, integral_representation };

/// One kernel evaluation with provenance, used when callers need the
/// branch-cut flag next to the value.
struct KernelEval {
    Cplx lambda;
    double r = 0.0;
    Cplx value;
    KernelPath path = KernelPath::series;
    /// Set when lambda*r lies within distance 0.05 of the negative real
    /// axis, where the logarithmic branch of the continuation matters.
    bool near_branch_cut = false;
    /// Set when |lambda*r| falls outside the validated range [1e-6, 1e4].
    bool accuracy_loss = false;
};

/// Hankel function of the first kind, order zero, principal branch.
/// Relative accuracy <= 1e-10 for 1e-6 <= |z| <= 1e4.
Cplx hankel0_first(Cplx z);

/// Outgoing free-space kernel of (-Laplacian - lambda^2) in the plane:
/// G(lambda, r) = (i/4) H0^(1)(lambda r).
Cplx free_kernel_2d(Cplx lambda, double r);

/// Independent evaluation of the same kernel through its exponential
/// integral representation, by adaptive tanh-sinh quadrature to absolute
/// error <= tol. The multiplicative constant is calibrated once at
/// lambda = 1, r = 1 against free_kernel_2d.
Cplx kernel_integral_rep(Cplx lambda, double r, double tol);

/// Evaluate through either path and report flags.
KernelEval evaluate_kernel(Cplx lambda, double r, KernelPath path, double tol = 1e-10);

} // namespace slabwave::specfun
