#pragma once

#include <string>
#include <vector>

#include "slabwave/geometry.hpp"

namespace slabwave::spectral {

using slabgeom::Grid2D;
using slabgeom::PlanarRealGrid;
using slabgeom::SlabGeometry;

/// Planar Dirichlet eigenpair of -Lap' + V on the disk B_R, discretized by
/// the masked five-point stencil with boundary-distance (Shortley-Weller)
/// corrections at cut cells. psi lives on the full grid, zero outside the
/// disk, L2(B_R)-normalized.
struct DiskEigenPair {
    int m = 0;
    double nu = 0.0;
    PlanarRealGrid psi;
    std::vector<double> flux_thetas;
    std::vector<double> flux; // d_r psi at r = R
};

/// Separable 3D eigenpair mu_{m,n} = nu_m + alpha_n^2 with eigenfunction
/// psi_m(x') sqrt(2/L) sin(alpha_n x3).
struct EigenPair {
    int j = 0;
    int m = 0;
    int n = 0;
    double mu = 0.0;
    double kappa = 0.0; // sqrt(mu) when mu > 0, else NaN
};

struct EigenBasis {
    SlabGeometry geom;
    Grid2D grid;
    std::vector<DiskEigenPair> disk;
    std::vector<EigenPair> pairs;
};

/// Lowest `count` Dirichlet eigenpairs of -Lap' + V on B_R by shift-invert
/// Arnoldi on the sparse stencil matrix. Degenerate clusters are returned
/// orthonormalized; a strongly negative V yields negative eigenvalues,
/// which are reported rather than rejected.
std::vector<DiskEigenPair> disk_eigensolve(const SlabGeometry& geom, const PlanarRealGrid& V,
                                           int count, const Grid2D& grid,
                                           int n_theta_flux = 256);

/// Tensorize disk pairs with the axial sine modes and sort by mu
/// (ties by (n, m)). Rejects geometries that put some kappa_j on a mode
/// threshold; perturb R or L in that case.
std::vector<EigenPair> assemble_3d_eigs(const SlabGeometry& geom,
                                        const std::vector<DiskEigenPair>& disk,
                                        int axial_cap);

EigenBasis make_eigen_basis(const SlabGeometry& geom, const PlanarRealGrid& V,
                            const Grid2D& grid, int disk_count, int axial_cap);

struct GammaTraceReal {
    std::vector<double> thetas;
    std::vector<double> x3s;
    std::vector<double> values; // row-major (itheta * nx3 + ix3)
    double R = 0.0;
    double L = 0.0;

    double norm_l2_sq() const;
};

/// Normal derivative of the 3D eigenfunction on Gamma:
/// flux_m(theta) * sqrt(2/L) * sin(alpha_n x3).
GammaTraceReal normal_derivative_on_gamma(const SlabGeometry& geom, const DiskEigenPair& disk,
                                          const EigenPair& pair,
                                          const std::vector<double>& thetas,
                                          const std::vector<double>& x3s);

struct WeylFit {
    double slope = 0.0;
    double E1 = 0.0;
    double E2 = 0.0;
};

/// Least-squares slope of log mu_j against log j, with the Weyl constants
/// E1 = min mu_j / j^{2/dim}, E2 = max over the fit window. The default
/// window is the upper half of the index range.
WeylFit weyl_fit(const std::vector<double>& mus, int dim, int j_lo = -1, int j_hi = -1);

/// Export: `<prefix>_index.json` with (j, m, n, mu, kappa) rows plus
/// `<prefix>_disk.bin` holding the planar eigenfunctions in the ModalField
/// serialization layout.
void save_eigen_basis(const EigenBasis& basis, const std::string& prefix);

} // namespace slabwave::spectral
