#include "slabwave/config.hpp"

#include <cmath>
#include <fstream>

namespace slabwave::cli {

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* section, const char* key, T& out) {
    if (!j.contains(section)) return;
    const nlohmann::json& s = j.at(section);
    if (!s.contains(key)) return;
    try {
        out = s.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string(section) + "." + key,
                           std::string("field ") + section + "." + key + " has the wrong type");
    }
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    read_field(j, "geometry", "L", c.L);
    read_field(j, "geometry", "N", c.N);
    read_field(j, "geometry", "R", c.R);
    read_field(j, "geometry", "h", c.h);
    read_field(j, "geometry", "extent", c.extent);

    read_field(j, "potential", "kind", c.potential_kind);
    read_field(j, "potential", "amplitude", c.potential_amplitude);
    read_field(j, "potential", "radius", c.potential_radius);
    read_field(j, "potential", "file", c.potential_file);

    read_field(j, "source", "kind", c.source_kind);
    read_field(j, "source", "band", c.source_band);
    read_field(j, "source", "eigen_index", c.source_eigen_index);
    read_field(j, "source", "radius", c.source_radius);
    read_field(j, "source", "sigma", c.source_sigma);
    read_field(j, "source", "file", c.source_file);

    read_field(j, "solver", "method", c.solver_method);
    read_field(j, "solver", "kappa", c.solver_kappa);

    read_field(j, "region", "M", c.region_M);
    read_field(j, "region", "C0", c.region_C0);

    read_field(j, "cutoff", "support_radius", c.cutoff_support);
    read_field(j, "cutoff", "plateau_radius", c.cutoff_plateau);

    read_field(j, "stability", "A", c.stab_A);
    read_field(j, "stability", "A1", c.stab_A1);
    read_field(j, "stability", "c", c.stab_c);
    read_field(j, "stability", "d", c.stab_d);
    read_field(j, "stability", "Q", c.stab_Q);
    read_field(j, "stability", "smoothness", c.stab_smoothness);
    read_field(j, "stability", "N1", c.stab_N1);
    read_field(j, "stability", "N1_list", c.stab_N1_list);
    read_field(j, "stability", "noise_list", c.stab_noise_list);
    read_field(j, "stability", "seed", c.seed);
    read_field(j, "stability", "window_samples", c.window_samples);
    read_field(j, "stability", "n_theta", c.n_theta);
    read_field(j, "stability", "n_x3", c.n_x3);

    read_field(j, "eigen", "count", c.eigen_count);
    read_field(j, "eigen", "axial_cap", c.axial_cap);

    read_field(j, "scan", "re_lo", c.scan_re_lo);
    read_field(j, "scan", "re_hi", c.scan_re_hi);
    read_field(j, "scan", "im_lo", c.scan_im_lo);
    read_field(j, "scan", "im_hi", c.scan_im_hi);
    read_field(j, "scan", "n_re", c.scan_n_re);
    read_field(j, "scan", "n_im", c.scan_n_im);
    read_field(j, "scan", "floor", c.scan_floor);
    read_field(j, "scan", "grid_h", c.scan_grid_h);

    read_field(j, "output", "directory", c.output_dir);
    read_field(j, "output", "svg", c.write_svg);
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    return nlohmann::json{
        {"geometry", {{"L", L}, {"N", N}, {"R", R}, {"h", h}, {"extent", extent}}},
        {"potential",
         {{"kind", potential_kind},
          {"amplitude", potential_amplitude},
          {"radius", potential_radius},
          {"file", potential_file}}},
        {"source",
         {{"kind", source_kind},
          {"band", source_band},
          {"eigen_index", source_eigen_index},
          {"radius", source_radius},
          {"sigma", source_sigma},
          {"file", source_file}}},
        {"solver", {{"method", solver_method}, {"kappa", solver_kappa}}},
        {"region", {{"M", region_M}, {"C0", region_C0}}},
        {"cutoff", {{"support_radius", cutoff_support}, {"plateau_radius", cutoff_plateau}}},
        {"stability",
         {{"A", stab_A},
          {"A1", stab_A1},
          {"c", stab_c},
          {"d", stab_d},
          {"Q", stab_Q},
          {"smoothness", stab_smoothness},
          {"N1", stab_N1},
          {"N1_list", stab_N1_list},
          {"noise_list", stab_noise_list},
          {"seed", seed},
          {"window_samples", window_samples},
          {"n_theta", n_theta},
          {"n_x3", n_x3}}},
        {"eigen", {{"count", eigen_count}, {"axial_cap", axial_cap}}},
        {"scan",
         {{"re_lo", scan_re_lo},
          {"re_hi", scan_re_hi},
          {"im_lo", scan_im_lo},
          {"im_hi", scan_im_hi},
          {"n_re", scan_n_re},
          {"n_im", scan_n_im},
          {"floor", scan_floor},
          {"grid_h", scan_grid_h}}},
        {"output", {{"directory", output_dir}, {"svg", write_svg}}},
    };
}

void ExperimentConfig::validate() const {
    if (!(L > 0.0)) throw config_error("geometry.L", "geometry.L must be positive");
    if (N < 1) throw config_error("geometry.N", "geometry.N must be at least 1");
    if (!(R > 0.0)) throw config_error("geometry.R", "geometry.R must be positive");
    if (!(h > 0.0)) throw config_error("geometry.h", "geometry.h must be positive");
    if (!(extent >= R + 2.0 * h))
        throw config_error("geometry.extent",
                           "geometry.extent must reach at least R + 2h so traces at r = R "
                           "stay inside the grid");

    if (potential_kind != "zero" && potential_kind != "constant" && potential_kind != "bump" &&
        potential_kind != "file")
        throw config_error("potential.kind",
                           "potential.kind must be one of zero|constant|bump|file");
    if (source_kind != "eigenmode" && source_kind != "bump" && source_kind != "indicator" &&
        source_kind != "file")
        throw config_error("source.kind",
                           "source.kind must be one of eigenmode|bump|indicator|file");
    if (source_band < 1 || source_band > N)
        throw config_error("source.band", "source.band must lie in [1, geometry.N]");
    if (solver_method != "dense" && solver_method != "neumann_series")
        throw config_error("solver.method", "solver.method must be dense|neumann_series");

    if (!(cutoff_plateau > 0.0) || !(cutoff_support > cutoff_plateau))
        throw config_error("cutoff.plateau_radius",
                           "cutoff radii must satisfy 0 < plateau < support");
    if (!(cutoff_support < R))
        throw config_error("cutoff.support_radius", "cutoff.support_radius must stay inside B_R");
    if (potential_kind == "bump" && !(potential_radius <= cutoff_plateau))
        throw config_error("potential.radius",
                           "potential.radius must not exceed cutoff.plateau_radius "
                           "(the cutoff must be 1 on supp V)");

    const double T = cutoff_T();
    if (!(region_M > 0.0) || !(region_M < 1.0 / (8.0 * T)))
        throw config_error("region.M", "region.M must satisfy 0 < M < 1/(8T) with T = 2 * "
                                       "cutoff.support_radius");
    const double alpha_N = N * M_PI / L;
    if (!(region_C0 > alpha_N))
        throw config_error("region.C0",
                           "region.C0 must exceed the largest threshold alpha_N = N pi / L");

    if (!(stab_A > region_C0))
        throw config_error("stability.A", "stability.A must exceed region.C0");
    if (!(stab_A1 > stab_A))
        throw config_error("stability.A1", "stability.A1 must exceed stability.A");
    if (!(stab_c > 0.0)) throw config_error("stability.c", "stability.c must be positive");
    if (stab_d < 0.0) throw config_error("stability.d", "stability.d must be nonnegative");
    if (!(stab_Q > 0.0)) throw config_error("stability.Q", "stability.Q must be positive");
    if (stab_N1 < 1) throw config_error("stability.N1", "stability.N1 must be at least 1");
    for (int v : stab_N1_list)
        if (v < 1) throw config_error("stability.N1_list", "all N1 entries must be >= 1");
    for (double v : stab_noise_list)
        if (v < 0.0)
            throw config_error("stability.noise_list", "noise levels must be nonnegative");
    if (window_samples < 1)
        throw config_error("stability.window_samples", "window_samples must be >= 1");
    if (n_theta < 8) throw config_error("stability.n_theta", "n_theta must be >= 8");
    if (n_x3 < 8) throw config_error("stability.n_x3", "n_x3 must be >= 8");

    if (eigen_count < 1) throw config_error("eigen.count", "eigen.count must be >= 1");
    if (axial_cap < N)
        throw config_error("eigen.axial_cap", "eigen.axial_cap must be at least geometry.N");

    if (scan_n_re < 1 || scan_n_im < 1)
        throw config_error("scan.n_re", "scan mesh must have at least one node per axis");
    if (!(scan_grid_h > 0.0)) throw config_error("scan.grid_h", "scan.grid_h must be positive");
    if (!(scan_floor > 0.0) || scan_floor >= 1.0)
        throw config_error("scan.floor", "scan.floor must lie in (0, 1)");
}

slabgeom::PlanarRealGrid ExperimentConfig::potential_real(const slabgeom::Grid2D& g) const {
    if (potential_kind == "zero") return slabgeom::PlanarRealGrid(g.size(), 0.0);
    if (potential_kind == "constant") {
        // constant on the plateau disk so the cutoff algebra still holds
        slabgeom::PlanarRealGrid v(g.size(), 0.0);
        for (int ix = 0; ix < g.n; ++ix)
            for (int iy = 0; iy < g.n; ++iy)
                if (std::hypot(g.coord(ix), g.coord(iy)) <= cutoff_plateau)
                    v[g.index(ix, iy)] = potential_amplitude;
        return v;
    }
    if (potential_kind == "bump")
        return slabgeom::make_bump_potential(g, potential_radius, potential_amplitude);
    throw config_error("potential.kind", "file potentials must be loaded by the caller");
}

slabgeom::PlanarGrid ExperimentConfig::potential(const slabgeom::Grid2D& g) const {
    const slabgeom::PlanarRealGrid v = potential_real(g);
    slabgeom::PlanarGrid out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
}

inverse::StabilityConfig ExperimentConfig::stability() const {
    inverse::StabilityConfig s;
    s.A = stab_A;
    s.A1 = stab_A1;
    s.c = stab_c;
    s.d = (stab_d > 0.0) ? stab_d : inverse::default_strip_halfwidth(region_M, stab_A);
    s.Q = stab_Q;
    s.N1 = stab_N1;
    s.smoothness = stab_smoothness;
    s.window_samples = window_samples;
    return s;
}

nlohmann::json apply_override(nlohmann::json j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw config_error("override", "override must look like section.key=value: " + assignment);
    std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    for (char& ch : path)
        if (ch == '.') ch = '/';
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value; // plain string
    }
    j[nlohmann::json::json_pointer("/" + path)] = parsed;
    return j;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
    nlohmann::json j;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw config_error("config", "cannot open config file " + path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw config_error("config", std::string("config parse failure: ") + e.what());
        }
    } else {
        j = nlohmann::json::object();
    }
    for (const std::string& ov : overrides) j = apply_override(j, ov);
    ExperimentConfig c = ExperimentConfig::from_json(j);
    c.validate();
    return c;
}

} // namespace slabwave::cli
