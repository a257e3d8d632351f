#include "slabwave/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace slabwave::slabgeom {

bool operator==(const Grid2D& a, const Grid2D& b) {
    return a.n == b.n && std::abs(a.h - b.h) < 1e-12 * a.h &&
           std::abs(a.half_extent - b.half_extent) < 1e-12 * a.half_extent;
}

CutoffFunction make_cutoff(double support_radius, double plateau_radius, const Grid2D& grid) {
    if (!(plateau_radius > 0.0) || !(support_radius > plateau_radius))
        throw domain_error("make_cutoff: need 0 < plateau_radius < support_radius");
    CutoffFunction c{support_radius, plateau_radius, grid, PlanarRealGrid(grid.size(), 0.0)};
    for (int ix = 0; ix < grid.n; ++ix) {
        for (int iy = 0; iy < grid.n; ++iy) {
            const double r = std::hypot(grid.coord(ix), grid.coord(iy));
            c.samples[grid.index(ix, iy)] = c.value(r);
        }
    }
    return c;
}

PlanarGrid mode_project(const std::function<Cplx(double, double, double)>& sample3d,
                        const SlabGeometry& geom, const Grid2D& grid, int n) {
    if (n < 1) throw domain_error("mode_project: mode index must be >= 1");
    const double an = geom.alpha(n);
    // >= 8 points per oscillation of sin(alpha_n x3); uniform trapezoid is
    // exact on products of the first P-1 sine modes.
    const int P = std::max(128, 8 * n);
    const double h3 = geom.L / P;
    std::vector<double> sines(P + 1);
    for (int k = 0; k <= P; ++k) sines[k] = std::sin(an * k * h3);

    PlanarGrid out(grid.size(), Cplx(0.0, 0.0));
    for (int ix = 0; ix < grid.n; ++ix) {
        const double x = grid.coord(ix);
        for (int iy = 0; iy < grid.n; ++iy) {
            const double y = grid.coord(iy);
            Cplx acc(0.0, 0.0);
            for (int k = 0; k <= P; ++k) {
                const double w = (k == 0 || k == P) ? 0.5 : 1.0;
                acc += w * sample3d(x, y, k * h3) * sines[k];
            }
            out[grid.index(ix, iy)] = acc * h3 * (2.0 / geom.L);
        }
    }
    return out;
}

std::vector<PlanarGrid> mode_synthesize(const ModalField& field,
                                        const std::vector<double>& x3_samples) {
    for (double x3 : x3_samples) {
        if (x3 < -1e-12 || x3 > field.geom.L + 1e-12)
            throw domain_error("mode_synthesize: x3 sample outside [0, L]");
    }
    std::vector<PlanarGrid> out;
    out.reserve(x3_samples.size());
    for (double x3 : x3_samples) {
        PlanarGrid slab(field.grid.size(), Cplx(0.0, 0.0));
        for (int n = 1; n <= field.band(); ++n) {
            const double s = std::sin(field.geom.alpha(n) * x3);
            if (s == 0.0 && (x3 == 0.0 || x3 == field.geom.L)) continue;
            const PlanarGrid& fn = field.modes[n - 1];
            for (int i = 0; i < field.grid.size(); ++i) slab[i] += fn[i] * s;
        }
        out.push_back(std::move(slab));
    }
    return out;
}

double planar_norm_sq(const Grid2D& grid, const PlanarGrid& f) {
    double acc = 0.0;
    for (int ix = 0; ix < grid.n; ++ix) {
        const double wx = grid.weight1d(ix);
        for (int iy = 0; iy < grid.n; ++iy) {
            acc += wx * grid.weight1d(iy) * std::norm(f[grid.index(ix, iy)]);
        }
    }
    return acc;
}

double parseval_norm(const ModalField& field) {
    double acc = 0.0;
    for (const PlanarGrid& fn : field.modes) acc += planar_norm_sq(field.grid, fn);
    return 0.5 * field.geom.L * acc;
}

Cplx bilinear(const Grid2D& grid, const PlanarGrid& f, double x, double y) {
    const double fx = (x + grid.half_extent) / grid.h;
    const double fy = (y + grid.half_extent) / grid.h;
    if (fx < -1e-9 || fy < -1e-9 || fx > grid.n - 1 + 1e-9 || fy > grid.n - 1 + 1e-9)
        throw domain_error("bilinear: point outside grid");
    const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.n - 2);
    const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.n - 2);
    const double tx = fx - i, ty = fy - j;
    return f[grid.index(i, j)] * ((1 - tx) * (1 - ty)) +
           f[grid.index(i + 1, j)] * (tx * (1 - ty)) +
           f[grid.index(i, j + 1)] * ((1 - tx) * ty) +
           f[grid.index(i + 1, j + 1)] * (tx * ty);
}

double bilinear_real(const Grid2D& grid, const PlanarRealGrid& f, double x, double y) {
    const double fx = (x + grid.half_extent) / grid.h;
    const double fy = (y + grid.half_extent) / grid.h;
    if (fx < -1e-9 || fy < -1e-9 || fx > grid.n - 1 + 1e-9 || fy > grid.n - 1 + 1e-9)
        throw domain_error("bilinear_real: point outside grid");
    const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, grid.n - 2);
    const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, grid.n - 2);
    const double tx = fx - i, ty = fy - j;
    return f[grid.index(i, j)] * ((1 - tx) * (1 - ty)) +
           f[grid.index(i + 1, j)] * (tx * (1 - ty)) +
           f[grid.index(i, j + 1)] * ((1 - tx) * ty) +
           f[grid.index(i + 1, j + 1)] * (tx * ty);
}

double field_diff_norm_sq(const ModalField& a, const ModalField& b) {
    if (!(a.grid == b.grid) || std::abs(a.geom.L - b.geom.L) > 1e-12)
        throw domain_error("field_diff_norm_sq: mismatched grids or geometry");
    const int band = std::max(a.band(), b.band());
    double acc = 0.0;
    PlanarGrid diff(a.grid.size());
    for (int n = 1; n <= band; ++n) {
        const PlanarGrid* fa = (n <= a.band()) ? &a.modes[n - 1] : nullptr;
        const PlanarGrid* fb = (n <= b.band()) ? &b.modes[n - 1] : nullptr;
        for (int i = 0; i < a.grid.size(); ++i) {
            const Cplx va = fa ? (*fa)[i] : Cplx(0.0, 0.0);
            const Cplx vb = fb ? (*fb)[i] : Cplx(0.0, 0.0);
            diff[i] = va - vb;
        }
        acc += planar_norm_sq(a.grid, diff);
    }
    return 0.5 * a.geom.L * acc;
}

PlanarGrid make_disk_indicator(const Grid2D& grid, double a, int subsample) {
    if (!(a > 0.0)) throw domain_error("make_disk_indicator: radius must be positive");
    PlanarGrid f(grid.size(), Cplx(0.0, 0.0));
    const double h = grid.h;
    for (int ix = 0; ix < grid.n; ++ix) {
        const double x = grid.coord(ix);
        for (int iy = 0; iy < grid.n; ++iy) {
            const double y = grid.coord(iy);
            const double r = std::hypot(x, y);
            if (r <= a - h) {
                f[grid.index(ix, iy)] = 1.0;
            } else if (r < a + h) {
                // straddling cell: coverage fraction of the cell
                int cnt = 0;
                for (int sx = 0; sx < subsample; ++sx) {
                    const double xx = x + ((sx + 0.5) / subsample - 0.5) * h;
                    for (int sy = 0; sy < subsample; ++sy) {
                        const double yy = y + ((sy + 0.5) / subsample - 0.5) * h;
                        if (xx * xx + yy * yy <= a * a) ++cnt;
                    }
                }
                f[grid.index(ix, iy)] = static_cast<double>(cnt) / (subsample * subsample);
            }
        }
    }
    return f;
}

PlanarRealGrid make_gaussian_bump(const Grid2D& grid, double sigma, double amplitude,
                                  double cx, double cy) {
    if (!(sigma > 0.0)) throw domain_error("make_gaussian_bump: sigma must be positive");
    PlanarRealGrid f(grid.size(), 0.0);
    for (int ix = 0; ix < grid.n; ++ix) {
        for (int iy = 0; iy < grid.n; ++iy) {
            const double dx = grid.coord(ix) - cx, dy = grid.coord(iy) - cy;
            f[grid.index(ix, iy)] = amplitude * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
        }
    }
    return f;
}

PlanarRealGrid make_bump_potential(const Grid2D& grid, double radius, double amplitude) {
    if (!(radius > 0.0)) throw domain_error("make_bump_potential: radius must be positive");
    PlanarRealGrid f(grid.size(), 0.0);
    for (int ix = 0; ix < grid.n; ++ix) {
        for (int iy = 0; iy < grid.n; ++iy) {
            const double r = std::hypot(grid.coord(ix), grid.coord(iy));
            if (r < radius) {
                const double s = r / radius;
                f[grid.index(ix, iy)] = amplitude * std::exp(1.0 - 1.0 / (1.0 - s * s));
            }
        }
    }
    return f;
}

void save_modal_field(const ModalField& field, const std::string& path) {
    nlohmann::json header = {
        {"L", field.geom.L},  {"N", field.band()},          {"R", field.geom.R},
        {"h", field.grid.h},  {"extent", field.grid.half_extent},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw domain_error("save_modal_field: cannot open " + path);
    out << header.dump() << '\n';
    for (const PlanarGrid& mode : field.modes) {
        for (const Cplx& v : mode) {
            const double re = v.real(), im = v.imag();
            out.write(reinterpret_cast<const char*>(&re), sizeof(double));
            out.write(reinterpret_cast<const char*>(&im), sizeof(double));
        }
    }
}

ModalField load_modal_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw domain_error("load_modal_field: cannot open " + path);
    std::string line;
    std::getline(in, line);
    const nlohmann::json header = nlohmann::json::parse(line);
    const SlabGeometry geom(header.at("L").get<double>(), header.at("N").get<int>(),
                            header.at("R").get<double>());
    const Grid2D grid(header.at("h").get<double>(), header.at("extent").get<double>());
    ModalField field(geom, grid, header.at("N").get<int>());
    for (PlanarGrid& mode : field.modes) {
        for (Cplx& v : mode) {
            double re = 0.0, im = 0.0;
            in.read(reinterpret_cast<char*>(&re), sizeof(double));
            in.read(reinterpret_cast<char*>(&im), sizeof(double));
            v = Cplx(re, im);
        }
    }
    if (!in) throw domain_error("load_modal_field: truncated payload in " + path);
    return field;
}

} // namespace slabwave::slabgeom
