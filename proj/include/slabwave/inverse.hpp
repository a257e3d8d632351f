#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slabwave/spectral.hpp"
#include "slabwave/waveguide.hpp"

namespace slabwave::inverse {

using slabgeom::Grid2D;
using slabgeom::ModalField;
using slabgeom::PlanarGrid;
using slabgeom::SlabGeometry;
using spectral::EigenBasis;
using spectral::EigenPair;
using Cplx = std::complex<double>;

/// Limited-aperture Dirichlet traces u(.,kappa)|_Gamma over a frequency
/// list on a common (theta, x3) lattice, with noise metadata.
struct BoundaryDataSet {
    SlabGeometry geom;
    std::vector<double> frequencies; // strictly increasing
    std::vector<double> thetas;
    std::vector<double> x3s;
    std::vector<std::vector<Cplx>> traces; // per frequency, theta-major
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    double eps_sq = 0.0;  // sum of kappa^2 ||u||^2 over non-window frequencies
    double eps1_sq = 0.0; // sup of kappa^2 ||u||^2 over the window samples

    int index_of(double kappa, double tol = 1e-9) const;
    double data_norm_sq(int idx) const; // kappa^2 ||u(., kappa)||^2_{L2(Gamma)}
};

/// Frequency-window machinery of the analytic-continuation estimate.
struct StabilityConfig {
    double A = 0.0;
    double A1 = 0.0;
    double a() const { return A1 - A; }
    double c = 0.1; // free positive constant of the continuation bound
    double d = 0.0; // strip half-width
    double Q = 1.0; // a-priori H^{n+1} bound
    int N1 = 1;
    int smoothness = 1; // n in H^{n+1}
    int window_samples = 16;

    void validate(double C0) const;
};

/// Largest strip half-width d with (A, inf) x (-d, d) inside the symmetric
/// log-region of slope M and cutoff C0.
double default_strip_halfwidth(double M, double A);

/// Solve at each frequency, trace on Gamma, and perturb with seeded complex
/// Gaussian noise scaled per frequency to noise_level * RMS(trace). The
/// noise stream of frequency i depends only on (seed, i).
BoundaryDataSet synthesize_data(const SlabGeometry& geom, const PlanarGrid& V,
                                const ModalField& f, const std::vector<double>& frequencies,
                                double noise_level, std::uint64_t seed, int n_theta = 96,
                                int n_x3 = 48, const StabilityConfig* cfg = nullptr);

/// Spectral coefficient from boundary data:
/// f_j = \int_Gamma u(., kappa_j) conj(d_nu phi_j) ds.
Cplx recover_coefficient(const BoundaryDataSet& data, const EigenBasis& basis,
                         const EigenPair& pair);

struct Reconstruction {
    ModalField field;
    std::vector<Cplx> coefficients; // f_j for j = 1..N1
};

/// Truncated eigen-expansion f_hat = sum_{j<=N1} f_j phi_j.
Reconstruction reconstruct_source(const BoundaryDataSet& data, const EigenBasis& basis, int N1);

/// mu(z) = 64 a d / (3 pi^2 (a^2 + 4 d^2)) * exp((pi/2d)(a/2 - z)).
double continuation_exponent(const StabilityConfig& cfg, double z);

/// Q^2 e^{c kappa} eps1^{2 mu(kappa)}: certified ceiling on unmeasured
/// high-frequency data magnitude.
double continuation_bound(const StabilityConfig& cfg, double eps1, double kappa);

struct TailCheck {
    double tail_sum = 0.0; // sum_{j>=s} |f_j|^2
    double bound = 0.0;    // Q^2 / s^{2(n+1)/3}
    double ratio = 0.0;
};

TailCheck tail_check(const std::vector<Cplx>& coefficients, int smoothness, int s, double Q);

struct SweepCell {
    int N1 = 0;
    double noise = 0.0;
    double eps = 0.0;
    double eps1 = 0.0;
    double rel_error = 0.0;
    double rhs_bound = 0.0;
    bool ok = false;
    std::string message;
};

struct SweepTable {
    std::vector<SweepCell> cells;
    double fitted_constant = 0.0;
};

/// Reconstruction error against the stability-estimate right-hand side over a
/// (N1, noise) product grid. Noiseless traces are solved once per frequency
/// and perturbed per noise level with the dataset's deterministic streams.
SweepTable stability_sweep(const SlabGeometry& geom, const PlanarGrid& V, const ModalField& f,
                           const StabilityConfig& cfg, const EigenBasis& basis,
                           const std::vector<int>& N1_list, const std::vector<double>& noise_list,
                           std::uint64_t seed, int n_theta = 96, int n_x3 = 48);

std::string sweep_to_csv(const SweepTable& table);

// Dataset file: single-line JSON manifest, then per-frequency binary trace
// blocks of float64 little-endian (re, im) pairs, theta-major.
void save_dataset(const BoundaryDataSet& data, const std::string& path);
BoundaryDataSet load_dataset(const std::string& path);

} // namespace slabwave::inverse
