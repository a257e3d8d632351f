#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "slabwave/geometry.hpp"
#include "slabwave/specfun.hpp"

namespace slabwave::waveguide {

using slabgeom::CutoffFunction;
using slabgeom::Grid2D;
using slabgeom::ModalField;
using slabgeom::PlanarGrid;
using slabgeom::SlabGeometry;
using Cplx = std::complex<double>;

/// Extended mode wavenumber beta_n(lambda) with the even/odd continuation
/// across the real axis. On the closed upper half-plane beta is the root of
/// lambda^2 - alpha_n^2 with Im beta >= 0; below the axis the imaginary part
/// continues oddly, landing on the second sheet.
struct ModeWavenumber {
    int n = 0;
    Cplx lambda;
    double gamma = 0.0; // lambda1^2 - lambda2^2 - alpha_n^2
    double eta = 0.0;   // 2 lambda1 lambda2
    double a = 0.0;     // half-plane magnitude of Re beta
    double b = 0.0;     // half-plane magnitude of Im beta
    Cplx beta;
};

ModeWavenumber beta_extended(const SlabGeometry& geom, int n, Cplx lambda);

/// True when lambda is within `tol` of any threshold +-alpha_n, n <= band.
bool near_threshold(const SlabGeometry& geom, Cplx lambda, int band, double tol = 1.5e-7);

/// Omega_M = { Im lambda >= -M log|lambda|, |lambda| >= C0 }.
struct ResonanceFreeRegion {
    double M = 0.0;
    double C0 = 0.0;
    double T = 0.0; // cutoff diameter of the active cutoff

    ResonanceFreeRegion(double M_, double C0_, double T_) : M(M_), C0(C0_), T(T_) {
        if (!(T > 0.0)) throw domain_error("ResonanceFreeRegion: T must be positive");
        if (!(M > 0.0) || !(M < 1.0 / (8.0 * T)))
            throw domain_error("ResonanceFreeRegion: need 0 < M < 1/(8T)");
        if (!(C0 > 0.0)) throw domain_error("ResonanceFreeRegion: C0 must be positive");
    }
};

bool in_resonance_free_region(const ResonanceFreeRegion& region, Cplx lambda);

/// Kernel samples on the difference lattice of `grid`, with quadrature
/// weight h^2 folded in and the self cell replaced by the analytic integral
/// of the kernel over one cell (logarithmic diagonal correction).
std::vector<Cplx> kernel_difference_lattice(Cplx beta, const Grid2D& grid);
Cplx kernel_self_cell(Cplx beta, double h);

/// Modal free solve u_n = G(beta_n) f_n by Nystrom product quadrature,
/// evaluated as an FFT convolution per mode.
ModalField apply_R0(const SlabGeometry& geom, Cplx lambda, const ModalField& source);

enum class SolveMethod { dense, neumann_series };

struct SolveReport {
    Cplx lambda;
    SolveMethod method = SolveMethod::dense;
    double residual = 0.0;                     // max over modes
    std::vector<double> mode_residuals;        // discrete l2 per mode
    std::optional<double> neumann_contraction; // estimate of ||V G(beta_n) rho||
    int iterations = 0;
    std::optional<double> condition_estimate;
    bool near_resonance_warning = false;
};

/// Lippmann-Schwinger solve u_n + G(beta_n)(V u_n) = G(beta_n) f_n per mode.
/// The dense method is always available; the Neumann series is accepted only
/// when the estimated contraction is below 1/2.
std::pair<ModalField, SolveReport> solve_RV(const SlabGeometry& geom, Cplx lambda,
                                            const PlanarGrid& V, const ModalField& source,
                                            SolveMethod method);

/// Largest singular value by power iteration on A*A.
double operator_norm_estimate(
    const std::function<std::vector<Cplx>(const std::vector<Cplx>&)>& apply,
    const std::function<std::vector<Cplx>(const std::vector<Cplx>&)>& apply_adjoint,
    int dim, double rel_tol = 1e-4, int max_iterations = 500);

/// Smallest singular value of a dense matrix by inverse power iteration.
/// Returns 0 for a numerically singular matrix.
double smallest_singular_value(const std::vector<Cplx>& matrix, int dim,
                               double rel_tol = 1e-3, int max_iterations = 300);

struct ScanMesh {
    double re_lo = 0.0, re_hi = 0.0;
    double im_lo = 0.0, im_hi = 0.0;
    int n_re = 0, n_im = 0;
};

struct ScanPoint {
    Cplx lambda;
    double min_singular = 0.0;
    bool flagged = false;
    bool masked = false;
};

struct ScanResult {
    ScanMesh mesh;
    double floor = 0.0;
    std::vector<ScanPoint> points; // row-major (ire * n_im + iim)
};

/// Sweep a lambda mesh and record the minimum singular value of the
/// discretized I + V rho G(beta_n) rho over modes n <= N. Mesh nodes within
/// half a step of a threshold are masked rather than evaluated.
ScanResult resonance_scan(const SlabGeometry& geom, const PlanarGrid& V,
                          const CutoffFunction& rho, const Grid2D& grid,
                          const ScanMesh& mesh, double flag_floor = 0.05);

struct BoundaryTrace {
    std::vector<double> thetas;
    std::vector<double> x3s;
    std::vector<Cplx> values; // row-major (itheta * nx3 + ix3)
    double R = 0.0;
    double L = 0.0;

    double norm_l2_sq() const;
};

/// Interpolate each mode onto the circle r = R and synthesize at the x3
/// samples. Requires the solution grid to extend beyond radius R.
BoundaryTrace trace_on_gamma(const SlabGeometry& geom, const ModalField& solution,
                             const std::vector<double>& thetas,
                             const std::vector<double>& x3s);

std::vector<double> uniform_angles(int n);
std::vector<double> uniform_x3(const SlabGeometry& geom, int n);

} // namespace slabwave::waveguide
