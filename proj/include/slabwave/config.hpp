#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "slabwave/geometry.hpp"
#include "slabwave/inverse.hpp"
#include "slabwave/spectral.hpp"
#include "slabwave/waveguide.hpp"

namespace slabwave::cli {

/// Validation failure carrying the offending config field.
class config_error : public domain_error {
public:
    config_error(std::string field_, const std::string& message)
        : domain_error(message), field(std::move(field_)) {}
    std::string field;
};

struct ExperimentConfig {
    // geometry
    double L = M_PI;
    int N = 2;
    double R = 1.0;
    double h = 1.0 / 64.0;
    double extent = 1.25;
    // potential
    std::string potential_kind = "zero"; // zero | constant | bump | file
    double potential_amplitude = 0.0;
    double potential_radius = 0.5;
    std::string potential_file;
    // source
    std::string source_kind = "eigenmode"; // eigenmode | bump | indicator | file
    int source_band = 1;
    int source_eigen_index = 1;
    double source_radius = 0.5;
    double source_sigma = 0.2;
    std::string source_file;
    // solver
    std::string solver_method = "dense"; // dense | neumann_series
    double solver_kappa = 5.0;
    // region
    double region_M = 0.05;
    double region_C0 = 5.0;
    // cutoff
    double cutoff_support = 0.85;
    double cutoff_plateau = 0.6;
    // stability
    double stab_A = 6.0;
    double stab_A1 = 8.0;
    double stab_c = 0.1;
    double stab_d = 0.0; // 0 = derive the largest strip inside the log region
    double stab_Q = 1.0;
    int stab_smoothness = 1;
    int stab_N1 = 20;
    std::vector<int> stab_N1_list{5, 10, 20, 40};
    std::vector<double> stab_noise_list{1e-3, 1e-2};
    std::uint64_t seed = 7;
    int window_samples = 16;
    int n_theta = 96;
    int n_x3 = 48;
    // eigen
    int eigen_count = 48;
    int axial_cap = 4;
    // scan
    double scan_re_lo = 5.0, scan_re_hi = 9.0;
    double scan_im_lo = -0.1, scan_im_hi = 0.1;
    int scan_n_re = 40, scan_n_im = 20;
    double scan_floor = 0.05;
    double scan_grid_h = 1.0 / 16.0;
    // output
    std::string output_dir = "out";
    bool write_svg = true;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Re-validates the module preconditions; throws config_error naming
    /// the offending field.
    void validate() const;

    slabgeom::SlabGeometry geometry() const { return {L, N, R}; }
    slabgeom::Grid2D grid() const { return {h, extent}; }
    slabgeom::Grid2D scan_grid() const { return {scan_grid_h, extent}; }

    slabgeom::PlanarGrid potential(const slabgeom::Grid2D& g) const;
    slabgeom::PlanarRealGrid potential_real(const slabgeom::Grid2D& g) const;
    inverse::StabilityConfig stability() const;
    double cutoff_T() const { return 2.0 * cutoff_support; }
};

/// Load a config file and apply dotted-path overrides ("geometry.L=2.0").
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides);

nlohmann::json apply_override(nlohmann::json j, const std::string& assignment);

} // namespace slabwave::cli
