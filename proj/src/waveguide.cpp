#include "slabwave/waveguide.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "slabwave/fft2d.hpp"
#include "slabwave/parallel.hpp"

namespace slabwave::waveguide {

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209008240243104;

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

std::mt19937_64 seeded_rng() { return std::mt19937_64(0x5ab3a7eULL); }

std::vector<Cplx> random_unit_vector(int dim) {
    auto rng = seeded_rng();
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Cplx> v(dim);
    double norm = 0.0;
    for (Cplx& x : v) {
        x = Cplx(g(rng), g(rng));
        norm += std::norm(x);
    }
    norm = std::sqrt(norm);
    for (Cplx& x : v) x /= norm;
    return v;
}

double vec_norm(const std::vector<Cplx>& v) {
    double acc = 0.0;
    for (const Cplx& x : v) acc += std::norm(x);
    return std::sqrt(acc);
}

/// Discrete l2 residual of (-Lap_h + V - beta^2) u - f over interior nodes.
double fd_mode_residual(const Grid2D& grid, const PlanarGrid& u, const PlanarGrid& f,
                        const PlanarGrid* V, Cplx beta_sq) {
    const int n = grid.n;
    const double inv_h2 = 1.0 / (grid.h * grid.h);
    double acc = 0.0;
    for (int i = 1; i < n - 1; ++i) {
        for (int j = 1; j < n - 1; ++j) {
            const int id = grid.index(i, j);
            Cplx lap = (4.0 * u[id] - u[grid.index(i - 1, j)] - u[grid.index(i + 1, j)] -
                        u[grid.index(i, j - 1)] - u[grid.index(i, j + 1)]) *
                       inv_h2;
            Cplx r = lap - beta_sq * u[id] - f[id];
            if (V) r += (*V)[id] * u[id];
            acc += std::norm(r);
        }
    }
    return std::sqrt(acc) * grid.h;
}

void check_source_support(const ModalField& source) {
    double overall = 0.0;
    double ring = 0.0;
    const Grid2D& g = source.grid;
    for (const PlanarGrid& mode : source.modes) {
        for (int i = 0; i < g.n; ++i) {
            for (int j = 0; j < g.n; ++j) {
                const double m = std::abs(mode[g.index(i, j)]);
                overall = std::max(overall, m);
                if (i == 0 || j == 0 || i == g.n - 1 || j == g.n - 1)
                    ring = std::max(ring, m);
            }
        }
    }
    if (overall > 0.0 && ring > 1e-12 * overall)
        throw domain_error("apply_R0: grid too small to contain the source support");
}

struct SupportSet {
    std::vector<int> ids; // grid indices with V != 0
    std::vector<int> ix, iy;
};

SupportSet potential_support(const Grid2D& grid, const PlanarGrid& V) {
    SupportSet s;
    for (int i = 0; i < grid.n; ++i) {
        for (int j = 0; j < grid.n; ++j) {
            if (std::abs(V[grid.index(i, j)]) > 0.0) {
                s.ids.push_back(grid.index(i, j));
                s.ix.push_back(i);
                s.iy.push_back(j);
            }
        }
    }
    return s;
}

/// Dense kernel matrix between support nodes, looked up from the
/// difference lattice (weights folded in).
MatrixXcd kernel_matrix_on_support(const std::vector<Cplx>& kdiff, const Grid2D& grid,
                                   const SupportSet& s) {
    const int m = static_cast<int>(s.ids.size());
    const int kd = 2 * grid.n - 1;
    MatrixXcd G(m, m);
    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) {
            const int di = s.ix[a] - s.ix[b] + grid.n - 1;
            const int dj = s.iy[a] - s.iy[b] + grid.n - 1;
            G(a, b) = kdiff[static_cast<size_t>(di) * kd + dj];
        }
    }
    return G;
}

} // namespace

ModeWavenumber beta_extended(const SlabGeometry& geom, int n, Cplx lambda) {
    const double an = geom.alpha(n);
    const double tol = 10.0 * std::sqrt(std::numeric_limits<double>::epsilon());
    if (std::abs(lambda - an) < tol || std::abs(lambda + an) < tol)
        throw threshold_error("beta_extended: lambda at threshold alpha_" + std::to_string(n));

    ModeWavenumber mw;
    mw.n = n;
    mw.lambda = lambda;
    const double l1 = lambda.real();
    const double l2 = lambda.imag();
    const double s2 = std::abs(l2);
    mw.gamma = l1 * l1 - l2 * l2 - an * an;
    mw.eta = 2.0 * l1 * l2;
    const double eta_half = 2.0 * l1 * s2; // eta at (lambda1, |lambda2|)
    const double mag = std::hypot(mw.gamma, eta_half);
    mw.a = std::sqrt(std::max(0.0, 0.5 * (mag + mw.gamma)));
    mw.b = std::sqrt(std::max(0.0, 0.5 * (mag - mw.gamma)));
    // Root with Im beta >= 0 on the closed upper half-plane; the formulas
    // give |Re beta|, and the sign of Re beta follows sign(lambda1) there.
    const double re = (l1 >= 0.0) ? mw.a : -mw.a;
    mw.beta = (l2 >= 0.0) ? Cplx(re, mw.b) : Cplx(re, -mw.b);
    return mw;
}

bool near_threshold(const SlabGeometry& geom, Cplx lambda, int band, double tol) {
    for (int n = 1; n <= band; ++n) {
        const double an = geom.alpha(n);
        if (std::abs(lambda - an) < tol || std::abs(lambda + an) < tol) return true;
    }
    return false;
}

bool in_resonance_free_region(const ResonanceFreeRegion& region, Cplx lambda) {
    const double mod = std::abs(lambda);
    if (mod < region.C0) return false;
    return lambda.imag() >= -region.M * std::log(mod);
}

Cplx kernel_self_cell(Cplx beta, double h) {
    // Integral of (i/4) H0^(1)(beta |y|) over one h-cell, from the
    // small-argument expansion H0 ~ 1 + (2i/pi)(log(beta|y|/2) + gamma).
    // \int_cell log|y| dy = h^2 (log h - log(2)/2 + pi/4 - 3/2).
    const double log_int = h * h * (std::log(h) - 0.5 * std::log(2.0) + M_PI / 4.0 - 1.5);
    return Cplx(0.0, 0.25) * h * h -
           (1.0 / (2.0 * M_PI)) * ((std::log(0.5 * beta) + kEulerGamma) * h * h + log_int);
}

std::vector<Cplx> kernel_difference_lattice(Cplx beta, const Grid2D& grid) {
    const int n = grid.n;
    const int kd = 2 * n - 1;
    const double h = grid.h;
    const double w = h * h;
    std::vector<Cplx> kdiff(static_cast<size_t>(kd) * kd);
    // distances repeat by symmetry; evaluate one octant worth of radii
    detail::parallel_for(kd, [&](int a) {
        const int di = a - (n - 1);
        for (int b = 0; b < kd; ++b) {
            const int dj = b - (n - 1);
            if (di == 0 && dj == 0) {
                kdiff[static_cast<size_t>(a) * kd + b] = kernel_self_cell(beta, h);
            } else if (dj < std::abs(di) && di >= 0) {
                // fill later from the symmetric entry
            } else {
                const double r = std::hypot(di * h, dj * h);
                kdiff[static_cast<size_t>(a) * kd + b] = w * specfun::free_kernel_2d(beta, r);
            }
        }
    });
    // kernel depends on |difference| only: copy the remaining entries
    for (int a = 0; a < kd; ++a) {
        const int di = a - (n - 1);
        for (int b = 0; b < kd; ++b) {
            const int dj = b - (n - 1);
            if (di == 0 && dj == 0) continue;
            if (dj < std::abs(di) && di >= 0) {
                const int a2 = (n - 1) + dj;
                const int b2 = (n - 1) + di;
                kdiff[static_cast<size_t>(a) * kd + b] =
                    kdiff[static_cast<size_t>(a2) * kd + b2];
            }
        }
    }
    return kdiff;
}

ModalField apply_R0(const SlabGeometry& geom, Cplx lambda, const ModalField& source) {
    if (near_threshold(geom, lambda, source.band()))
        throw threshold_error("apply_R0: lambda within exclusion zone of a threshold");
    check_source_support(source);

    ModalField out(source.geom, source.grid, source.band());
    detail::ConvolutionPlan plan(source.grid.n);
    for (int n = 1; n <= source.band(); ++n) {
        const Cplx beta = beta_extended(geom, n, lambda).beta;
        plan.set_kernel(kernel_difference_lattice(beta, source.grid));
        out.modes[n - 1] = plan.apply(source.modes[n - 1]);
    }
    return out;
}

std::pair<ModalField, SolveReport> solve_RV(const SlabGeometry& geom, Cplx lambda,
                                            const PlanarGrid& V, const ModalField& source,
                                            SolveMethod method) {
    const Grid2D& grid = source.grid;
    if (static_cast<int>(V.size()) != grid.size())
        throw domain_error("solve_RV: potential not sampled on the source grid");
    if (near_threshold(geom, lambda, source.band()))
        throw threshold_error("solve_RV: lambda within exclusion zone of a threshold");
    check_source_support(source);

    const SupportSet supp = potential_support(grid, V);
    const int m = static_cast<int>(supp.ids.size());

    SolveReport report;
    report.lambda = lambda;
    report.method = method;

    ModalField out(source.geom, grid, source.band());
    detail::ConvolutionPlan plan(grid.n);

    for (int n = 1; n <= source.band(); ++n) {
        const Cplx beta = beta_extended(geom, n, lambda).beta;
        const std::vector<Cplx> kdiff = kernel_difference_lattice(beta, grid);
        plan.set_kernel(kdiff);
        PlanarGrid u = plan.apply(source.modes[n - 1]); // G f

        if (m > 0) {
            const MatrixXcd G = kernel_matrix_on_support(kdiff, grid, supp);
            VectorXcd rhs(m);
            for (int a = 0; a < m; ++a) rhs(a) = V[supp.ids[a]] * u[supp.ids[a]];

            VectorXcd w(m);
            if (method == SolveMethod::dense) {
                MatrixXcd A = G;
                for (int a = 0; a < m; ++a) A.row(a) *= V[supp.ids[a]];
                A += MatrixXcd::Identity(m, m);
                Eigen::PartialPivLU<MatrixXcd> lu(A);
                const double rc = lu.rcond();
                if (rc > 0.0 && std::isfinite(rc)) {
                    report.condition_estimate =
                        std::max(report.condition_estimate.value_or(0.0), 1.0 / rc);
                    if (rc < 1e-8) report.near_resonance_warning = true;
                } else {
                    report.near_resonance_warning = true;
                }
                w = lu.solve(rhs);
                report.iterations = std::max(report.iterations, 1);
            } else {
                auto apply_vg = [&](const std::vector<Cplx>& x) {
                    VectorXcd xv = Eigen::Map<const VectorXcd>(x.data(), m);
                    VectorXcd y = G * xv;
                    std::vector<Cplx> r(m);
                    for (int a = 0; a < m; ++a) r[a] = V[supp.ids[a]] * y(a);
                    return r;
                };
                auto apply_vg_h = [&](const std::vector<Cplx>& x) {
                    VectorXcd xv(m);
                    for (int a = 0; a < m; ++a) xv(a) = std::conj(V[supp.ids[a]]) * x[a];
                    VectorXcd y = G.adjoint() * xv;
                    std::vector<Cplx> r(m);
                    for (int a = 0; a < m; ++a) r[a] = y(a);
                    return r;
                };
                const double contraction = operator_norm_estimate(apply_vg, apply_vg_h, m);
                report.neumann_contraction =
                    std::max(report.neumann_contraction.value_or(0.0), contraction);
                if (contraction >= 0.5) {
                    throw numeric_error(
                        "solve_RV: Neumann series refused, contraction estimate " +
                            std::to_string(contraction) + " >= 1/2",
                        contraction);
                }
                w = rhs;
                int it = 0;
                for (; it < 400; ++it) {
                    VectorXcd gw = G * w;
                    VectorXcd next(m);
                    for (int a = 0; a < m; ++a)
                        next(a) = rhs(a) - V[supp.ids[a]] * gw(a);
                    const double gap = (next - w).norm();
                    w = next;
                    if (gap <= 1e-13 * std::max(1.0, w.norm())) break;
                }
                report.iterations = std::max(report.iterations, it + 1);
            }

            PlanarGrid wgrid(grid.size(), Cplx(0.0, 0.0));
            for (int a = 0; a < m; ++a) wgrid[supp.ids[a]] = w(a);
            const PlanarGrid gw = plan.apply(wgrid);
            for (int i = 0; i < grid.size(); ++i) u[i] -= gw[i];
        }

        const Cplx beta_sq = beta * beta;
        report.mode_residuals.push_back(
            fd_mode_residual(grid, u, source.modes[n - 1], m > 0 ? &V : nullptr, beta_sq));
        out.modes[n - 1] = std::move(u);
    }
    report.residual = *std::max_element(report.mode_residuals.begin(),
                                        report.mode_residuals.end());
    return {std::move(out), std::move(report)};
}

double operator_norm_estimate(
    const std::function<std::vector<Cplx>(const std::vector<Cplx>&)>& apply,
    const std::function<std::vector<Cplx>(const std::vector<Cplx>&)>& apply_adjoint,
    int dim, double rel_tol, int max_iterations) {
    if (dim < 1) throw domain_error("operator_norm_estimate: dim must be >= 1");
    std::vector<Cplx> x = random_unit_vector(dim);
    double sigma_prev = -1.0;
    double gap = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        std::vector<Cplx> w = apply(x);
        const double sigma = vec_norm(w);
        if (sigma < 1e-300) return 0.0;
        std::vector<Cplx> y = apply_adjoint(w);
        const double ny = vec_norm(y);
        if (ny < 1e-300) return sigma;
        for (int i = 0; i < dim; ++i) x[i] = y[i] / ny;
        gap = std::abs(sigma - sigma_prev);
        if (sigma_prev >= 0.0 && gap <= rel_tol * sigma) return sigma;
        sigma_prev = sigma;
    }
    throw numeric_error("operator_norm_estimate: power iteration did not converge", gap);
}

double smallest_singular_value(const std::vector<Cplx>& matrix, int dim, double rel_tol,
                               int max_iterations) {
    MatrixXcd A(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) A(i, j) = matrix[static_cast<size_t>(i) * dim + j];
    Eigen::PartialPivLU<MatrixXcd> lu(A);

    std::vector<Cplx> xs = random_unit_vector(dim);
    VectorXcd x = Eigen::Map<VectorXcd>(xs.data(), dim);
    double nu_prev = -1.0;
    double nu = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        VectorXcd u = lu.adjoint().solve(x); // M^H u = x
        VectorXcd v = lu.solve(u);           // M v = u
        nu = v.norm();
        if (!std::isfinite(nu) || nu > 1e280) return 0.0;
        if (nu < 1e-300) return 0.0;
        x = v / nu;
        if (nu_prev > 0.0 && std::abs(nu - nu_prev) <= rel_tol * nu) break;
        nu_prev = nu;
    }
    return 1.0 / std::sqrt(nu);
}

ScanResult resonance_scan(const SlabGeometry& geom, const PlanarGrid& V,
                          const CutoffFunction& rho, const Grid2D& grid,
                          const ScanMesh& mesh, double flag_floor) {
    if (static_cast<int>(V.size()) != grid.size() ||
        static_cast<int>(rho.samples.size()) != grid.size())
        throw domain_error("resonance_scan: V and rho must be sampled on the scan grid");
    if (mesh.n_re < 1 || mesh.n_im < 1)
        throw domain_error("resonance_scan: mesh must contain at least one node");
    double vmax = 0.0;
    for (int i = 0; i < grid.size(); ++i) vmax = std::max(vmax, std::abs(V[i]));
    for (int i = 0; i < grid.size(); ++i) {
        if (std::abs(V[i]) * (1.0 - rho.samples[i]) > 1e-12 * std::max(1.0, vmax))
            throw domain_error("resonance_scan: cutoff must satisfy rho V = V");
    }

    // operator lives on supp rho
    SupportSet supp;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            if (rho.samples[grid.index(i, j)] > 1e-14) {
                supp.ids.push_back(grid.index(i, j));
                supp.ix.push_back(i);
                supp.iy.push_back(j);
            }
    const int m = static_cast<int>(supp.ids.size());
    const int kd = 2 * grid.n - 1;

    const double dre = (mesh.n_re > 1) ? (mesh.re_hi - mesh.re_lo) / (mesh.n_re - 1) : 0.0;
    const double dim_ = (mesh.n_im > 1) ? (mesh.im_hi - mesh.im_lo) / (mesh.n_im - 1) : 0.0;
    const double mask_radius = 0.5 * std::max(dre, dim_);

    ScanResult result;
    result.mesh = mesh;
    result.floor = flag_floor;
    result.points.resize(static_cast<size_t>(mesh.n_re) * mesh.n_im);

    detail::parallel_for(mesh.n_re * mesh.n_im, [&](int idx) {
        const int ire = idx / mesh.n_im;
        const int iim = idx % mesh.n_im;
        const Cplx lambda(mesh.re_lo + ire * dre, mesh.im_lo + iim * dim_);
        ScanPoint pt;
        pt.lambda = lambda;
        for (int n = 1; n <= geom.N && !pt.masked; ++n) {
            const double an = geom.alpha(n);
            if (std::abs(lambda - an) < mask_radius || std::abs(lambda + an) < mask_radius)
                pt.masked = true;
        }
        if (!pt.masked) {
            double sig_min = std::numeric_limits<double>::infinity();
            for (int n = 1; n <= geom.N; ++n) {
                const Cplx beta = beta_extended(geom, n, lambda).beta;
                const std::vector<Cplx> kdiff = kernel_difference_lattice(beta, grid);
                std::vector<Cplx> M(static_cast<size_t>(m) * m);
                for (int a = 0; a < m; ++a) {
                    const Cplx va = V[supp.ids[a]] * rho.samples[supp.ids[a]];
                    for (int b = 0; b < m; ++b) {
                        const int di = supp.ix[a] - supp.ix[b] + grid.n - 1;
                        const int dj = supp.iy[a] - supp.iy[b] + grid.n - 1;
                        Cplx v = va * kdiff[static_cast<size_t>(di) * kd + dj] *
                                 rho.samples[supp.ids[b]];
                        if (a == b) v += 1.0;
                        M[static_cast<size_t>(a) * m + b] = v;
                    }
                }
                sig_min = std::min(sig_min, smallest_singular_value(M, m));
            }
            pt.min_singular = sig_min;
            pt.flagged = sig_min < flag_floor;
        }
        result.points[static_cast<size_t>(ire) * mesh.n_im + iim] = pt;
    });
    return result;
}

double BoundaryTrace::norm_l2_sq() const {
    const int nt = static_cast<int>(thetas.size());
    const int nx = static_cast<int>(x3s.size());
    double acc = 0.0;
    for (int i = 0; i < nt; ++i) {
        const double tp = thetas[(i + 1) % nt] + ((i + 1 == nt) ? 2.0 * M_PI : 0.0);
        const double tm = (i == 0) ? thetas[nt - 1] - 2.0 * M_PI : thetas[i - 1];
        const double wt = 0.5 * (tp - tm);
        for (int j = 0; j < nx; ++j) {
            double wx;
            if (j == 0)
                wx = 0.5 * (x3s[1] - x3s[0]);
            else if (j == nx - 1)
                wx = 0.5 * (x3s[nx - 1] - x3s[nx - 2]);
            else
                wx = 0.5 * (x3s[j + 1] - x3s[j - 1]);
            acc += wt * wx * std::norm(values[static_cast<size_t>(i) * nx + j]);
        }
    }
    return acc * R;
}

BoundaryTrace trace_on_gamma(const SlabGeometry& geom, const ModalField& solution,
                             const std::vector<double>& thetas,
                             const std::vector<double>& x3s) {
    const Grid2D& grid = solution.grid;
    if (grid.half_extent < geom.R + grid.h)
        throw domain_error("trace_on_gamma: grid extent must exceed radius R");
    if (thetas.size() < 2 || x3s.size() < 2)
        throw domain_error("trace_on_gamma: need at least two samples per direction");

    BoundaryTrace tr;
    tr.thetas = thetas;
    tr.x3s = x3s;
    tr.R = geom.R;
    tr.L = geom.L;
    const int nt = static_cast<int>(thetas.size());
    const int nx = static_cast<int>(x3s.size());
    tr.values.assign(static_cast<size_t>(nt) * nx, Cplx(0.0, 0.0));

    std::vector<Cplx> ring(static_cast<size_t>(nt) * solution.band());
    for (int i = 0; i < nt; ++i) {
        const double x = geom.R * std::cos(thetas[i]);
        const double y = geom.R * std::sin(thetas[i]);
        for (int n = 1; n <= solution.band(); ++n)
            ring[static_cast<size_t>(i) * solution.band() + n - 1] =
                slabgeom::bilinear(grid, solution.modes[n - 1], x, y);
    }
    for (int j = 0; j < nx; ++j) {
        if (x3s[j] < -1e-12 || x3s[j] > geom.L + 1e-12)
            throw domain_error("trace_on_gamma: x3 sample outside [0, L]");
    }
    for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < nx; ++j) {
            Cplx acc(0.0, 0.0);
            for (int n = 1; n <= solution.band(); ++n)
                acc += ring[static_cast<size_t>(i) * solution.band() + n - 1] *
                       std::sin(geom.alpha(n) * x3s[j]);
            tr.values[static_cast<size_t>(i) * nx + j] = acc;
        }
    }
    return tr;
}

std::vector<double> uniform_angles(int n) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = (i + 0.5) * 2.0 * M_PI / n;
    return t;
}

std::vector<double> uniform_x3(const SlabGeometry& geom, int n) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = geom.L * i / (n - 1);
    return x;
}

} // namespace slabwave::waveguide
