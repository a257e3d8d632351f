#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "slabwave/errors.hpp"

namespace slabwave::slabgeom {

using Cplx = std::complex<double>;
using PlanarGrid = std::vector<Cplx>;      // row-major (ix * n + iy)
using PlanarRealGrid = std::vector<double>;

/// The slab D = R^2 x (0, L) with Dirichlet plates, band limit N and the
/// observation cylinder Omega = B_R x (0, L) with lateral boundary Gamma.
struct SlabGeometry {
    double L = 0.0;
    int N = 0;
    double R = 0.0;

    SlabGeometry(double L_, int N_, double R_) : L(L_), N(N_), R(R_) {
        if (!(L > 0.0)) throw domain_error("SlabGeometry: L must be positive");
        if (!(R > 0.0)) throw domain_error("SlabGeometry: R must be positive");
        if (N < 1) throw domain_error("SlabGeometry: N must be at least 1");
    }

    /// Mode threshold alpha_n = n pi / L.
    double alpha(int n) const {
        if (n < 1) throw domain_error("alpha_n: mode index must be >= 1");
        return static_cast<double>(n) * M_PI / L;
    }
};

inline double alpha_n(const SlabGeometry& geom, int n) { return geom.alpha(n); }

/// Uniform square lattice covering [-half_extent, half_extent]^2.
struct Grid2D {
    double h = 0.0;
    double half_extent = 0.0;
    int n = 0; // nodes per side

    Grid2D(double h_, double half_extent_) : h(h_), half_extent(half_extent_) {
        if (!(h > 0.0) || !(half_extent > 0.0))
            throw domain_error("Grid2D: spacing and half-extent must be positive");
        const double ratio = 2.0 * half_extent / h;
        const double rounded = std::round(ratio);
        if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
            throw domain_error("Grid2D: 2*half_extent must be an integer multiple of h");
        n = static_cast<int>(rounded) + 1;
    }

    double coord(int i) const { return -half_extent + i * h; }
    int size() const { return n * n; }
    int index(int ix, int iy) const { return ix * n + iy; }

    /// 1D trapezoidal weight for node i.
    double weight1d(int i) const { return (i == 0 || i == n - 1) ? 0.5 * h : h; }
};

bool operator==(const Grid2D& a, const Grid2D& b);

/// Band-limited field: one planar coefficient grid per axial sine mode.
struct ModalField {
    SlabGeometry geom;
    Grid2D grid;
    std::vector<PlanarGrid> modes;

    ModalField(const SlabGeometry& g, const Grid2D& gr, int band)
        : geom(g), grid(gr), modes(band, PlanarGrid(gr.size(), Cplx(0.0, 0.0))) {
        if (band < 1) throw domain_error("ModalField: band must be >= 1");
    }

    int band() const { return static_cast<int>(modes.size()); }
};

/// Smooth radial bump: 1 on the plateau disk, 0 outside the support disk,
/// exp(1 - 1/(1-s^2)) across the transition annulus.
struct CutoffFunction {
    double support_radius = 0.0;
    double plateau_radius = 0.0;
    Grid2D grid;
    PlanarRealGrid samples;

    double diameter() const { return 2.0 * support_radius; } // T

    double value(double r) const {
        if (r <= plateau_radius) return 1.0;
        if (r >= support_radius) return 0.0;
        const double s = (r - plateau_radius) / (support_radius - plateau_radius);
        return std::exp(1.0 - 1.0 / (1.0 - s * s));
    }
};

CutoffFunction make_cutoff(double support_radius, double plateau_radius, const Grid2D& grid);

/// Fourier sine coefficient (2/L) \int_0^L sample(x', x3) sin(alpha_n x3) dx3
/// per grid node, by uniform trapezoidal quadrature with at least 8 points
/// per oscillation (exact on the band-limited subspace).
PlanarGrid mode_project(const std::function<Cplx(double, double, double)>& sample3d,
                        const SlabGeometry& geom, const Grid2D& grid, int n);

/// Pointwise synthesis sum_{n<=band} f_n(x') sin(alpha_n x3) at each
/// requested x3 sample. Vanishes identically at x3 in {0, L}.
std::vector<PlanarGrid> mode_synthesize(const ModalField& field,
                                        const std::vector<double>& x3_samples);

/// Squared L^2(D) norm through the Parseval identity
/// (L/2) sum_n ||f_n||^2 with trapezoidal planar quadrature.
double parseval_norm(const ModalField& field);

/// Squared planar L^2 norm of one coefficient grid (trapezoidal weights).
double planar_norm_sq(const Grid2D& grid, const PlanarGrid& f);

/// Bilinear interpolation of a planar grid at (x, y).
Cplx bilinear(const Grid2D& grid, const PlanarGrid& f, double x, double y);
double bilinear_real(const Grid2D& grid, const PlanarRealGrid& f, double x, double y);

/// Squared L^2(D) norm of the difference of two fields that may carry
/// different bands (missing modes count as zero). Grids must match.
double field_diff_norm_sq(const ModalField& a, const ModalField& b);

// --- source/potential construction helpers ---

/// Indicator of the disk r <= a, antialiased by subsampling cells that
/// straddle the circle so midpoint quadrature sees the exact cell coverage.
PlanarGrid make_disk_indicator(const Grid2D& grid, double a, int subsample = 16);

/// exp(-(r/sigma)^2 / 2) bump scaled to amplitude, centered at (cx, cy).
PlanarRealGrid make_gaussian_bump(const Grid2D& grid, double sigma, double amplitude,
                                  double cx = 0.0, double cy = 0.0);

/// Smooth compactly supported radial bump with the cutoff profile.
PlanarRealGrid make_bump_potential(const Grid2D& grid, double radius, double amplitude);

// --- serialization ---
// One file: a single-line JSON header {"L","N","R","h","extent"} followed
// by '\n' and, per mode, row-major float64 little-endian (re, im) pairs.

void save_modal_field(const ModalField& field, const std::string& path);
ModalField load_modal_field(const std::string& path);

} // namespace slabwave::slabgeom
