#include "slabwave/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace slabwave::spectral {

namespace {

using Eigen::MatrixXd;
using Eigen::SparseMatrix;
using Eigen::VectorXd;

struct DiskStencil {
    std::vector<int> ids; // grid index of each interior node
    std::vector<int> ix, iy;
    SparseMatrix<double> A; // -Lap_SW + V on interior nodes
};

// Fraction of the step from (x0,y0) toward (dx,dy) at which the circle
// r = R is crossed. Assumes the neighbor lies outside.
double boundary_fraction(double x0, double y0, double dx, double dy, double R) {
    const double a = dx * dx + dy * dy;
    const double b = 2.0 * (x0 * dx + y0 * dy);
    const double c = x0 * x0 + y0 * y0 - R * R;
    const double disc = std::max(0.0, b * b - 4.0 * a * c);
    const double t = (-b + std::sqrt(disc)) / (2.0 * a);
    return std::clamp(t, 1e-3, 1.0);
}

DiskStencil build_disk_stencil(const SlabGeometry& geom, const PlanarRealGrid& V,
                               const Grid2D& grid) {
    const int n = grid.n;
    const double R = geom.R;
    const double h = grid.h;
    DiskStencil st;
    std::vector<int> node_of(grid.size(), -1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = grid.coord(i), y = grid.coord(j);
            if (x * x + y * y < R * R) {
                node_of[grid.index(i, j)] = static_cast<int>(st.ids.size());
                st.ids.push_back(grid.index(i, j));
                st.ix.push_back(i);
                st.iy.push_back(j);
            }
        }
    }
    const int m = static_cast<int>(st.ids.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(m) * 5);
    for (int k = 0; k < m; ++k) {
        const int i = st.ix[k], j = st.iy[k];
        const double x0 = grid.coord(i), y0 = grid.coord(j);
        double diag = V[st.ids[k]];
        for (int axis = 0; axis < 2; ++axis) {
            const int di = (axis == 0) ? 1 : 0;
            const int dj = (axis == 0) ? 0 : 1;
            const int gp = (i + di < n && j + dj < n) ? node_of[grid.index(i + di, j + dj)] : -1;
            const int gm = (i - di >= 0 && j - dj >= 0) ? node_of[grid.index(i - di, j - dj)] : -1;
            const double sp = (gp >= 0) ? 1.0 : boundary_fraction(x0, y0, di * h, dj * h, R);
            const double sm = (gm >= 0) ? 1.0 : boundary_fraction(x0, y0, -di * h, -dj * h, R);
            diag += 2.0 / (sp * sm * h * h);
            if (gp >= 0) trip.emplace_back(k, gp, -2.0 / (sp * (sp + sm) * h * h));
            if (gm >= 0) trip.emplace_back(k, gm, -2.0 / (sm * (sp + sm) * h * h));
        }
        trip.emplace_back(k, k, diag);
    }
    st.A.resize(m, m);
    st.A.setFromTriplets(trip.begin(), trip.end());
    return st;
}

struct RitzPair {
    double theta; // eigenvalue of the shifted inverse
    VectorXd vec;
};

/// Shift-invert Arnoldi with full reorthogonalization. Returns at least
/// `count` converged Ritz pairs of (A - sigma I)^{-1}, largest first.
std::vector<RitzPair> shift_invert_arnoldi(const SparseMatrix<double>& A, double sigma,
                                           int count) {
    const int dim = static_cast<int>(A.rows());
    SparseMatrix<double> As = A;
    for (int k = 0; k < dim; ++k) As.coeffRef(k, k) -= sigma;
    As.makeCompressed();
    Eigen::SparseLU<SparseMatrix<double>> lu(As);
    if (lu.info() != Eigen::Success)
        throw numeric_error("disk_eigensolve: factorization of the shifted operator failed");

    const int m_max = std::min(dim, std::max(3 * count + 60, 120));
    MatrixXd Vb(dim, m_max + 1);
    MatrixXd H = MatrixXd::Zero(m_max + 1, m_max);

    std::mt19937_64 rng(0xd15cULL);
    std::normal_distribution<double> g(0.0, 1.0);
    VectorXd v0(dim);
    for (int i = 0; i < dim; ++i) v0(i) = g(rng);
    Vb.col(0) = v0.normalized();

    int built = 0;
    for (int k = 0; k < m_max; ++k) {
        VectorXd w = lu.solve(Vb.col(k));
        for (int pass = 0; pass < 2; ++pass) {
            for (int i = 0; i <= k; ++i) {
                const double hik = Vb.col(i).dot(w);
                w -= hik * Vb.col(i);
                if (pass == 0) H(i, k) += hik;
            }
        }
        const double beta = w.norm();
        H(k + 1, k) = beta;
        built = k + 1;
        if (beta < 1e-13) {
            // invariant subspace found; restart direction
            VectorXd r(dim);
            for (int i = 0; i < dim; ++i) r(i) = g(rng);
            for (int i = 0; i <= k; ++i) r -= Vb.col(i).dot(r) * Vb.col(i);
            if (r.norm() < 1e-12) break;
            Vb.col(k + 1) = r.normalized();
        } else {
            Vb.col(k + 1) = w / beta;
        }
    }

    // Ritz extraction from the built Hessenberg block.
    const int k = built;
    Eigen::EigenSolver<MatrixXd> es(H.topLeftCorner(k, k));
    struct Cand {
        double theta;
        double resid;
        Eigen::VectorXcd y;
    };
    std::vector<Cand> cand;
    for (int i = 0; i < k; ++i) {
        const std::complex<double> th = es.eigenvalues()(i);
        if (std::abs(th.imag()) > 1e-8 * std::max(1.0, std::abs(th))) continue;
        Eigen::VectorXcd y = es.eigenvectors().col(i);
        const double resid = std::abs(H(k, k - 1)) * std::abs(y(k - 1));
        cand.push_back({th.real(), resid, y});
    }
    std::sort(cand.begin(), cand.end(),
              [](const Cand& a, const Cand& b) { return a.theta > b.theta; });

    std::vector<RitzPair> out;
    for (const Cand& c : cand) {
        if (static_cast<int>(out.size()) >= count) break;
        if (c.resid > 1e-8 * std::max(1.0, std::abs(c.theta))) continue;
        VectorXd x = (Vb.leftCols(k) * c.y).real();
        const double nrm = x.norm();
        if (nrm < 1e-12) continue;
        out.push_back({c.theta, x / nrm});
    }
    if (static_cast<int>(out.size()) < count)
        throw numeric_error("disk_eigensolve: Arnoldi converged only " +
                            std::to_string(out.size()) + " of " + std::to_string(count) +
                            " pairs; refine the grid or reduce count");
    return out;
}

double interp_flux(const std::vector<double>& thetas, const std::vector<double>& flux,
                   double theta) {
    const int n = static_cast<int>(thetas.size());
    const double two_pi = 2.0 * M_PI;
    double t = std::fmod(theta, two_pi);
    if (t < 0) t += two_pi;
    // uniform lattice generated by uniform_angles: t_i = (i + 0.5) dt
    const double dt = two_pi / n;
    double pos = t / dt - 0.5;
    if (pos < 0) pos += n;
    const int i0 = static_cast<int>(std::floor(pos)) % n;
    const int i1 = (i0 + 1) % n;
    const double frac = pos - std::floor(pos);
    return flux[i0] * (1.0 - frac) + flux[i1] * frac;
}

} // namespace

std::vector<DiskEigenPair> disk_eigensolve(const SlabGeometry& geom, const PlanarRealGrid& V,
                                           int count, const Grid2D& grid, int n_theta_flux) {
    if (static_cast<int>(V.size()) != grid.size())
        throw domain_error("disk_eigensolve: potential not sampled on the grid");
    if (grid.half_extent < geom.R)
        throw domain_error("disk_eigensolve: grid must cover the disk B_R");
    if (count < 1) throw domain_error("disk_eigensolve: count must be >= 1");

    DiskStencil st = build_disk_stencil(geom, V, grid);
    const int dim = static_cast<int>(st.ids.size());
    if (count > dim / 4)
        throw domain_error("disk_eigensolve: count exceeds a quarter of the discrete dimension");

    double vmin = 0.0;
    for (int id : st.ids) vmin = std::min(vmin, V[id]);
    const double sigma = vmin - 1.0;

    std::vector<RitzPair> ritz = shift_invert_arnoldi(st.A, sigma, count);

    const double h = grid.h;
    MatrixXd Psi(dim, count);
    std::vector<double> nus(count);
    for (int c = 0; c < count; ++c) {
        nus[c] = sigma + 1.0 / ritz[c].theta;
        Psi.col(c) = ritz[c].vec / h; // L2(B_R) normalization: ||psi||_2 * h = 1
    }
    // sort ascending in nu
    std::vector<int> order(count);
    for (int c = 0; c < count; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return nus[a] < nus[b]; });
    {
        MatrixXd tmp(dim, count);
        std::vector<double> nu2(count);
        for (int c = 0; c < count; ++c) {
            tmp.col(c) = Psi.col(order[c]);
            nu2[c] = nus[order[c]];
        }
        Psi = tmp;
        nus = nu2;
    }

    // Loewdin pass: restore exact L2 orthonormality. The stencil is mildly
    // nonsymmetric at cut cells and degenerate clusters arrive in an
    // arbitrary basis; G^{-1/2} fixes both with a minimal perturbation.
    {
        MatrixXd G = (Psi.transpose() * Psi) * (h * h);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
        VectorXd d = es.eigenvalues();
        for (int i = 0; i < count; ++i) d(i) = 1.0 / std::sqrt(std::max(d(i), 1e-14));
        Psi = Psi * (es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
    }

    std::vector<DiskEigenPair> out(count);
    const std::vector<double> flux_thetas = [&] {
        std::vector<double> t(n_theta_flux);
        for (int i = 0; i < n_theta_flux; ++i) t[i] = (i + 0.5) * 2.0 * M_PI / n_theta_flux;
        return t;
    }();
    const double delta = 1.5 * h;
    for (int c = 0; c < count; ++c) {
        DiskEigenPair& p = out[c];
        p.m = c + 1;
        p.nu = nus[c];
        p.psi.assign(grid.size(), 0.0);
        // deterministic sign: largest-magnitude node positive
        int arg = 0;
        for (int i = 1; i < dim; ++i)
            if (std::abs(Psi(i, c)) > std::abs(Psi(arg, c))) arg = i;
        const double sgn = (Psi(arg, c) >= 0.0) ? 1.0 : -1.0;
        for (int i = 0; i < dim; ++i) p.psi[st.ids[i]] = sgn * Psi(i, c);
        p.flux_thetas = flux_thetas;
        p.flux.resize(n_theta_flux);
        for (int i = 0; i < n_theta_flux; ++i) {
            const double ct = std::cos(flux_thetas[i]), stn = std::sin(flux_thetas[i]);
            // third-order one-sided difference anchored at psi(R) = 0
            const double p1 =
                slabgeom::bilinear_real(grid, p.psi, (geom.R - delta) * ct, (geom.R - delta) * stn);
            const double p2 = slabgeom::bilinear_real(grid, p.psi, (geom.R - 2 * delta) * ct,
                                                      (geom.R - 2 * delta) * stn);
            const double p3 = slabgeom::bilinear_real(grid, p.psi, (geom.R - 3 * delta) * ct,
                                                      (geom.R - 3 * delta) * stn);
            p.flux[i] = (-18.0 * p1 + 9.0 * p2 - 2.0 * p3) / (6.0 * delta);
        }
    }
    return out;
}

std::vector<EigenPair> assemble_3d_eigs(const SlabGeometry& geom,
                                        const std::vector<DiskEigenPair>& disk,
                                        int axial_cap) {
    if (disk.empty()) throw domain_error("assemble_3d_eigs: no disk pairs");
    if (axial_cap < geom.N)
        throw domain_error("assemble_3d_eigs: axial cap must be at least the band limit N");

    std::vector<EigenPair> pairs;
    pairs.reserve(disk.size() * axial_cap);
    for (int n = 1; n <= axial_cap; ++n) {
        const double an = geom.alpha(n);
        for (const DiskEigenPair& d : disk) {
            EigenPair p;
            p.m = d.m;
            p.n = n;
            p.mu = d.nu + an * an;
            p.kappa = (p.mu > 0.0) ? std::sqrt(p.mu) : std::numeric_limits<double>::quiet_NaN();
            pairs.push_back(p);
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) {
        if (a.mu != b.mu) return a.mu < b.mu;
        if (a.n != b.n) return a.n < b.n;
        return a.m < b.m;
    });
    for (size_t i = 0; i < pairs.size(); ++i) pairs[i].j = static_cast<int>(i) + 1;

    for (const EigenPair& p : pairs) {
        if (!(p.mu > 0.0)) continue;
        const int n_hi = static_cast<int>(std::ceil(p.kappa * geom.L / M_PI)) + 1;
        for (int n = 1; n <= n_hi; ++n) {
            if (std::abs(p.kappa - geom.alpha(n)) < 1e-6) {
                throw geometry_rejection(
                    "assemble_3d_eigs: kappa_" + std::to_string(p.j) +
                    " collides with threshold alpha_" + std::to_string(n) +
                    "; adjust the scale of the domain (perturb R or L)");
            }
        }
    }
    return pairs;
}

EigenBasis make_eigen_basis(const SlabGeometry& geom, const PlanarRealGrid& V,
                            const Grid2D& grid, int disk_count, int axial_cap) {
    EigenBasis basis{geom, grid, {}, {}};
    basis.disk = disk_eigensolve(geom, V, disk_count, grid);
    basis.pairs = assemble_3d_eigs(geom, basis.disk, axial_cap);
    return basis;
}

double GammaTraceReal::norm_l2_sq() const {
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
            acc += wt * wx * values[static_cast<size_t>(i) * nx + j] *
                   values[static_cast<size_t>(i) * nx + j];
        }
    }
    return acc * R;
}

GammaTraceReal normal_derivative_on_gamma(const SlabGeometry& geom, const DiskEigenPair& disk,
                                          const EigenPair& pair,
                                          const std::vector<double>& thetas,
                                          const std::vector<double>& x3s) {
    if (disk.flux.empty())
        throw domain_error("normal_derivative_on_gamma: disk pair carries no flux samples");
    if (disk.m != pair.m)
        throw domain_error("normal_derivative_on_gamma: disk pair does not match eigenpair");
    GammaTraceReal tr;
    tr.thetas = thetas;
    tr.x3s = x3s;
    tr.R = geom.R;
    tr.L = geom.L;
    const int nt = static_cast<int>(thetas.size());
    const int nx = static_cast<int>(x3s.size());
    tr.values.resize(static_cast<size_t>(nt) * nx);
    const double axial_norm = std::sqrt(2.0 / geom.L);
    const double an = geom.alpha(pair.n);
    for (int i = 0; i < nt; ++i) {
        const double fx = interp_flux(disk.flux_thetas, disk.flux, thetas[i]);
        for (int j = 0; j < nx; ++j)
            tr.values[static_cast<size_t>(i) * nx + j] =
                fx * axial_norm * std::sin(an * x3s[j]);
    }
    return tr;
}

WeylFit weyl_fit(const std::vector<double>& mus, int dim, int j_lo, int j_hi) {
    const int J = static_cast<int>(mus.size());
    if (J < 30) throw domain_error("weyl_fit: need at least 30 eigenvalues");
    if (j_lo < 1) j_lo = J / 2;
    if (j_hi < 1 || j_hi > J) j_hi = J;
    if (j_hi - j_lo < 5) throw domain_error("weyl_fit: fit window too small");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    WeylFit fit;
    fit.E1 = std::numeric_limits<double>::infinity();
    fit.E2 = 0.0;
    const double p = 2.0 / dim;
    for (int j = j_lo; j <= j_hi; ++j) {
        const double mu = mus[j - 1];
        if (!(mu > 0.0)) throw domain_error("weyl_fit: nonpositive eigenvalue in window");
        const double x = std::log(static_cast<double>(j));
        const double y = std::log(mu);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++cnt;
        const double ratio = mu / std::pow(static_cast<double>(j), p);
        fit.E1 = std::min(fit.E1, ratio);
        fit.E2 = std::max(fit.E2, ratio);
    }
    fit.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return fit;
}

void save_eigen_basis(const EigenBasis& basis, const std::string& prefix) {
    nlohmann::json idx = nlohmann::json::array();
    for (const EigenPair& p : basis.pairs) {
        idx.push_back({{"j", p.j}, {"m", p.m}, {"n", p.n}, {"mu", p.mu}, {"kappa", p.kappa}});
    }
    {
        std::ofstream out(prefix + "_index.json");
        if (!out) throw domain_error("save_eigen_basis: cannot open " + prefix + "_index.json");
        out << idx.dump(2) << '\n';
    }
    {
        nlohmann::json header = {{"L", basis.geom.L},
                                 {"N", static_cast<int>(basis.disk.size())},
                                 {"R", basis.geom.R},
                                 {"h", basis.grid.h},
                                 {"extent", basis.grid.half_extent}};
        std::ofstream out(prefix + "_disk.bin", std::ios::binary);
        if (!out) throw domain_error("save_eigen_basis: cannot open " + prefix + "_disk.bin");
        out << header.dump() << '\n';
        for (const DiskEigenPair& d : basis.disk) {
            for (double v : d.psi) {
                const double im = 0.0;
                out.write(reinterpret_cast<const char*>(&v), sizeof(double));
                out.write(reinterpret_cast<const char*>(&im), sizeof(double));
            }
        }
    }
}

} // namespace slabwave::spectral
