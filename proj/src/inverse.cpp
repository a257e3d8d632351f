#include "slabwave/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "slabwave/parallel.hpp"

namespace slabwave::inverse {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Complex Gaussian stream for one frequency, reproducible from
/// (seed, frequency index) alone.
std::mt19937_64 frequency_stream(std::uint64_t seed, int freq_index) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(freq_index))));
}

double trace_rms(const std::vector<Cplx>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (const Cplx& x : v) acc += std::norm(x);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

void add_noise(std::vector<Cplx>& trace, double noise_level, std::uint64_t seed,
               int freq_index) {
    if (noise_level <= 0.0) return;
    auto rng = frequency_stream(seed, freq_index);
    std::normal_distribution<double> g(0.0, 1.0);
    const double sigma = noise_level * trace_rms(trace) / std::sqrt(2.0);
    for (Cplx& x : trace) x += Cplx(sigma * g(rng), sigma * g(rng));
}

double lattice_norm_sq(const BoundaryDataSet& d, const std::vector<Cplx>& trace) {
    waveguide::BoundaryTrace tr;
    tr.thetas = d.thetas;
    tr.x3s = d.x3s;
    tr.values = trace;
    tr.R = d.geom.R;
    tr.L = d.geom.L;
    return tr.norm_l2_sq();
}

void refresh_data_norms(BoundaryDataSet& d, const StabilityConfig* cfg) {
    d.eps_sq = 0.0;
    d.eps1_sq = 0.0;
    for (size_t i = 0; i < d.frequencies.size(); ++i) {
        const double k = d.frequencies[i];
        const double v = k * k * lattice_norm_sq(d, d.traces[i]);
        const bool in_window = cfg && k > cfg->A && k < cfg->A1;
        if (in_window)
            d.eps1_sq = std::max(d.eps1_sq, v);
        else
            d.eps_sq += v;
    }
    if (!cfg) {
        d.eps1_sq = 0.0;
        for (size_t i = 0; i < d.frequencies.size(); ++i)
            d.eps1_sq = std::max(d.eps1_sq, d.data_norm_sq(static_cast<int>(i)));
    }
}

} // namespace

int BoundaryDataSet::index_of(double kappa, double tol) const {
    for (size_t i = 0; i < frequencies.size(); ++i) {
        if (std::abs(frequencies[i] - kappa) <= tol * std::max(1.0, std::abs(kappa)))
            return static_cast<int>(i);
    }
    return -1;
}

double BoundaryDataSet::data_norm_sq(int idx) const {
    const double k = frequencies[idx];
    return k * k * lattice_norm_sq(*this, traces[idx]);
}

void StabilityConfig::validate(double C0) const {
    if (!(C0 < A)) throw domain_error("StabilityConfig: need C0 < A");
    if (!(A < A1)) throw domain_error("StabilityConfig: need A < A1");
    if (!(d > 0.0)) throw domain_error("StabilityConfig: need d > 0");
    if (!(Q > 0.0)) throw domain_error("StabilityConfig: need Q > 0");
    if (N1 < 1) throw domain_error("StabilityConfig: need N1 >= 1");
    if (!(c > 0.0)) throw domain_error("StabilityConfig: need c > 0");
}

double default_strip_halfwidth(double M, double A) {
    if (!(A > 1.0)) throw domain_error("default_strip_halfwidth: need A > 1");
    return 0.95 * M * std::log(A);
}

BoundaryDataSet synthesize_data(const SlabGeometry& geom, const PlanarGrid& V,
                                const ModalField& f, const std::vector<double>& frequencies,
                                double noise_level, std::uint64_t seed, int n_theta, int n_x3,
                                const StabilityConfig* cfg) {
    if (frequencies.empty()) throw domain_error("synthesize_data: empty frequency list");
    for (size_t i = 1; i < frequencies.size(); ++i) {
        if (!(frequencies[i] > frequencies[i - 1]))
            throw domain_error("synthesize_data: frequencies must be strictly increasing");
    }
    BoundaryDataSet d{geom,
                      frequencies,
                      waveguide::uniform_angles(n_theta),
                      waveguide::uniform_x3(geom, n_x3),
                      {},
                      noise_level,
                      seed,
                      0.0,
                      0.0};
    d.traces.resize(frequencies.size());

    std::vector<std::string> failures(frequencies.size());
    detail::parallel_for(static_cast<int>(frequencies.size()), [&](int i) {
        try {
            const auto [u, report] =
                waveguide::solve_RV(geom, Cplx(frequencies[i], 0.0), V, f,
                                    waveguide::SolveMethod::dense);
            (void)report;
            d.traces[i] = waveguide::trace_on_gamma(geom, u, d.thetas, d.x3s).values;
            add_noise(d.traces[i], noise_level, seed, i);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    for (size_t i = 0; i < frequencies.size(); ++i) {
        if (!failures[i].empty())
            throw numeric_error("synthesize_data: solve at kappa = " +
                                std::to_string(frequencies[i]) + " failed: " + failures[i]);
    }
    refresh_data_norms(d, cfg);
    return d;
}

Cplx recover_coefficient(const BoundaryDataSet& data, const EigenBasis& basis,
                         const EigenPair& pair) {
    if (!(pair.mu > 0.0))
        throw domain_error("recover_coefficient: eigenpair has nonpositive mu");
    const int idx = data.index_of(pair.kappa);
    if (idx < 0)
        throw domain_error("recover_coefficient: data does not contain frequency kappa_" +
                           std::to_string(pair.j));
    const spectral::DiskEigenPair& disk = basis.disk.at(pair.m - 1);
    const spectral::GammaTraceReal phi =
        spectral::normal_derivative_on_gamma(basis.geom, disk, pair, data.thetas, data.x3s);

    const std::vector<Cplx>& u = data.traces[idx];
    if (u.size() != phi.values.size())
        throw domain_error("recover_coefficient: data lattice does not match trace lattice");

    const int nt = static_cast<int>(data.thetas.size());
    const int nx = static_cast<int>(data.x3s.size());
    Cplx acc(0.0, 0.0);
    for (int i = 0; i < nt; ++i) {
        const double tp = data.thetas[(i + 1) % nt] + ((i + 1 == nt) ? 2.0 * M_PI : 0.0);
        const double tm = (i == 0) ? data.thetas[nt - 1] - 2.0 * M_PI : data.thetas[i - 1];
        const double wt = 0.5 * (tp - tm);
        for (int j = 0; j < nx; ++j) {
            double wx;
            if (j == 0)
                wx = 0.5 * (data.x3s[1] - data.x3s[0]);
            else if (j == nx - 1)
                wx = 0.5 * (data.x3s[nx - 1] - data.x3s[nx - 2]);
            else
                wx = 0.5 * (data.x3s[j + 1] - data.x3s[j - 1]);
            acc += wt * wx * u[static_cast<size_t>(i) * nx + j] *
                   phi.values[static_cast<size_t>(i) * nx + j];
        }
    }
    return acc * basis.geom.R;
}

Reconstruction reconstruct_source(const BoundaryDataSet& data, const EigenBasis& basis,
                                  int N1) {
    if (N1 < 0) throw domain_error("reconstruct_source: N1 must be >= 0");
    if (N1 > static_cast<int>(basis.pairs.size()))
        throw domain_error("reconstruct_source: basis holds fewer than N1 pairs");

    int band = 1;
    for (int j = 1; j <= N1; ++j) band = std::max(band, basis.pairs[j - 1].n);

    Reconstruction rec{ModalField(basis.geom, basis.grid, band), {}};
    const double axial_norm = std::sqrt(2.0 / basis.geom.L);
    for (int j = 1; j <= N1; ++j) {
        const EigenPair& p = basis.pairs[j - 1];
        const Cplx fj = recover_coefficient(data, basis, p);
        rec.coefficients.push_back(fj);
        const spectral::DiskEigenPair& disk = basis.disk.at(p.m - 1);
        slabgeom::PlanarGrid& mode = rec.field.modes[p.n - 1];
        for (int i = 0; i < basis.grid.size(); ++i) mode[i] += fj * axial_norm * disk.psi[i];
    }
    return rec;
}

double continuation_exponent(const StabilityConfig& cfg, double z) {
    if (!(z > cfg.A1))
        throw domain_error("continuation_exponent: z must exceed the window end A1");
    const double a = cfg.a();
    const double d = cfg.d;
    const double pref = 64.0 * a * d / (3.0 * M_PI * M_PI * (a * a + 4.0 * d * d));
    return pref * std::exp((M_PI / (2.0 * d)) * (0.5 * a - z));
}

double continuation_bound(const StabilityConfig& cfg, double eps1, double kappa) {
    if (!(kappa > cfg.A1))
        throw domain_error("continuation_bound: kappa must exceed the window end A1");
    if (!(eps1 > 0.0) || eps1 > 1.0)
        throw domain_error("continuation_bound: need 0 < eps1 <= 1 (estimate vacuous otherwise)");
    const double mu = continuation_exponent(cfg, kappa);
    return cfg.Q * cfg.Q * std::exp(cfg.c * kappa) * std::pow(eps1, 2.0 * mu);
}

TailCheck tail_check(const std::vector<Cplx>& coefficients, int smoothness, int s, double Q) {
    if (s < 1) throw domain_error("tail_check: s must be >= 1");
    if (static_cast<int>(coefficients.size()) < 2 * s)
        throw domain_error("tail_check: coefficients must extend well beyond s");
    if (!(Q > 0.0)) throw domain_error("tail_check: Q must be positive");
    TailCheck t;
    for (size_t j = static_cast<size_t>(s); j <= coefficients.size(); ++j)
        t.tail_sum += std::norm(coefficients[j - 1]);
    t.bound = Q * Q / std::pow(static_cast<double>(s), 2.0 * (smoothness + 1) / 3.0);
    t.ratio = t.tail_sum / t.bound;
    return t;
}

SweepTable stability_sweep(const SlabGeometry& geom, const PlanarGrid& V, const ModalField& f,
                           const StabilityConfig& cfg, const EigenBasis& basis,
                           const std::vector<int>& N1_list, const std::vector<double>& noise_list,
                           std::uint64_t seed, int n_theta, int n_x3) {
    if (N1_list.empty() || noise_list.empty())
        throw domain_error("stability_sweep: empty N1 or noise list");
    const int max_n1 = *std::max_element(N1_list.begin(), N1_list.end());
    if (max_n1 > static_cast<int>(basis.pairs.size()))
        throw domain_error("stability_sweep: basis holds fewer pairs than max N1");

    // frequency list: eigen kappas (deduplicated) plus Chebyshev nodes of
    // the window (A, A1)
    std::vector<double> freqs;
    for (int j = 1; j <= max_n1; ++j) {
        const double k = basis.pairs[j - 1].kappa;
        if (!(k > 0.0)) throw domain_error("stability_sweep: nonpositive kappa in basis");
        freqs.push_back(k);
    }
    for (int q = 0; q < cfg.window_samples; ++q) {
        freqs.push_back(0.5 * (cfg.A + cfg.A1) +
                        0.5 * (cfg.A1 - cfg.A) * std::cos(M_PI * (q + 0.5) / cfg.window_samples));
    }
    std::sort(freqs.begin(), freqs.end());
    freqs.erase(std::unique(freqs.begin(), freqs.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                freqs.end());

    const BoundaryDataSet clean =
        synthesize_data(geom, V, f, freqs, 0.0, seed, n_theta, n_x3, &cfg);
    const double f_norm_sq = slabgeom::parseval_norm(f);

    SweepTable table;
    const double p_exp = (cfg.smoothness + 1) / 3.0;
    std::vector<double> rhs_raw;
    for (double noise : noise_list) {
        BoundaryDataSet noisy = clean;
        noisy.noise_level = noise;
        for (size_t i = 0; i < noisy.traces.size(); ++i)
            add_noise(noisy.traces[i], noise, seed, static_cast<int>(i));
        refresh_data_norms(noisy, &cfg);

        // recover the full coefficient prefix once per noise level
        std::vector<Cplx> coeffs(max_n1, Cplx(0.0, 0.0));
        std::string recover_failure;
        try {
            for (int j = 1; j <= max_n1; ++j)
                coeffs[j - 1] = recover_coefficient(noisy, basis, basis.pairs[j - 1]);
        } catch (const std::exception& e) {
            recover_failure = e.what();
        }

        for (int N1 : N1_list) {
            SweepCell cell;
            cell.N1 = N1;
            cell.noise = noise;
            if (!recover_failure.empty()) {
                cell.message = recover_failure;
                table.cells.push_back(cell);
                rhs_raw.push_back(0.0);
                continue;
            }
            try {
                ModalField fhat(basis.geom, basis.grid, 1);
                {
                    int band = 1;
                    for (int j = 1; j <= N1; ++j) band = std::max(band, basis.pairs[j - 1].n);
                    fhat = ModalField(basis.geom, basis.grid, band);
                    const double axial_norm = std::sqrt(2.0 / basis.geom.L);
                    for (int j = 1; j <= N1; ++j) {
                        const EigenPair& p = basis.pairs[j - 1];
                        const spectral::DiskEigenPair& dk = basis.disk.at(p.m - 1);
                        for (int i = 0; i < basis.grid.size(); ++i)
                            fhat.modes[p.n - 1][i] += coeffs[j - 1] * axial_norm * dk.psi[i];
                    }
                }
                cell.rel_error =
                    std::sqrt(slabgeom::field_diff_norm_sq(fhat, f) / f_norm_sq);
                double eps_sq = 0.0;
                for (int j = 1; j <= N1; ++j) {
                    const int idx = noisy.index_of(basis.pairs[j - 1].kappa);
                    eps_sq += noisy.data_norm_sq(idx);
                }
                cell.eps = std::sqrt(eps_sq);
                cell.eps1 = std::sqrt(noisy.eps1_sq);
                // stability-estimate RHS; loglog term floored since the formula
                // is asymptotic for small eps1.
                const double loglog = std::max(std::log(std::abs(std::log(cell.eps1))), 0.1);
                const double raw =
                    eps_sq + cfg.Q * cfg.Q / (std::pow(static_cast<double>(N1), p_exp) *
                                              std::pow(loglog, p_exp));
                rhs_raw.push_back(raw);
                cell.rhs_bound = raw; // rescaled by the fitted constant below
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.message = e.what();
                rhs_raw.push_back(0.0);
            }
            table.cells.push_back(cell);
        }
    }

    double cfit = 0.0;
    for (size_t i = 0; i < table.cells.size(); ++i) {
        if (!table.cells[i].ok || rhs_raw[i] <= 0.0) continue;
        const double err_abs_sq =
            table.cells[i].rel_error * table.cells[i].rel_error * f_norm_sq;
        cfit = std::max(cfit, err_abs_sq / rhs_raw[i]);
    }
    table.fitted_constant = cfit;
    for (size_t i = 0; i < table.cells.size(); ++i)
        if (table.cells[i].ok) table.cells[i].rhs_bound = cfit * rhs_raw[i];
    return table;
}

std::string sweep_to_csv(const SweepTable& table) {
    std::ostringstream out;
    out << "N1,noise,eps,eps1,rel_error,rhs_bound\n";
    out.precision(12);
    for (const SweepCell& c : table.cells) {
        out << c.N1 << ',' << c.noise << ',';
        if (c.ok)
            out << c.eps << ',' << c.eps1 << ',' << c.rel_error << ',' << c.rhs_bound << '\n';
        else
            out << ",,,FAILED:" << (c.message.empty() ? "unknown" : c.message) << '\n';
    }
    return out.str();
}

void save_dataset(const BoundaryDataSet& data, const std::string& path) {
    nlohmann::json manifest = {
        {"L", data.geom.L},
        {"N", data.geom.N},
        {"R", data.geom.R},
        {"frequencies", data.frequencies},
        {"noise_level", data.noise_level},
        {"seed", data.seed},
        {"n_theta", data.thetas.size()},
        {"n_x3", data.x3s.size()},
        {"eps_sq", data.eps_sq},
        {"eps1_sq", data.eps1_sq},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw domain_error("save_dataset: cannot open " + path);
    out << manifest.dump() << '\n';
    for (const std::vector<Cplx>& trace : data.traces) {
        for (const Cplx& v : trace) {
            const double re = v.real(), im = v.imag();
            out.write(reinterpret_cast<const char*>(&re), sizeof(double));
            out.write(reinterpret_cast<const char*>(&im), sizeof(double));
        }
    }
}

BoundaryDataSet load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw domain_error("load_dataset: cannot open " + path);
    std::string line;
    std::getline(in, line);
    const nlohmann::json m = nlohmann::json::parse(line);
    const SlabGeometry geom(m.at("L").get<double>(), m.at("N").get<int>(),
                            m.at("R").get<double>());
    BoundaryDataSet d{geom,
                      m.at("frequencies").get<std::vector<double>>(),
                      waveguide::uniform_angles(m.at("n_theta").get<int>()),
                      waveguide::uniform_x3(geom, m.at("n_x3").get<int>()),
                      {},
                      m.at("noise_level").get<double>(),
                      m.at("seed").get<std::uint64_t>(),
                      m.at("eps_sq").get<double>(),
                      m.at("eps1_sq").get<double>()};
    const size_t block = d.thetas.size() * d.x3s.size();
    d.traces.assign(d.frequencies.size(), std::vector<Cplx>(block));
    for (std::vector<Cplx>& trace : d.traces) {
        for (Cplx& v : trace) {
            double re = 0.0, im = 0.0;
            in.read(reinterpret_cast<char*>(&re), sizeof(double));
            in.read(reinterpret_cast<char*>(&im), sizeof(double));
            v = Cplx(re, im);
        }
    }
    if (!in) throw domain_error("load_dataset: truncated payload in " + path);
    return d;
}

} // namespace slabwave::inverse
