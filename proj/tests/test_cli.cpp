#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slabwave/config.hpp"

using namespace slabwave;
using cli::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

std::string binary_path() {
    const char* p = std::getenv("SLABWAVE_BIN");
    REQUIRE(p != nullptr);
    return p;
}

std::string sample_config() {
    const char* p = std::getenv("SLABWAVE_SAMPLE_CONFIG");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = binary_path() + " " + args + " >/dev/null 2>cli_stderr.txt";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config parse, defaults, and validation messages") {
    const ExperimentConfig cfg = cli::load_config(sample_config(), {});
    CHECK(cfg.N == 2);
    CHECK(cfg.stab_N1_list.size() == 3);

    // invalid field is named
    try {
        cli::load_config(sample_config(), {"geometry.L=-1"});
        FAIL("expected config_error");
    } catch (const cli::config_error& e) {
        CHECK(e.field == "geometry.L");
    }

    // module preconditions re-validated at parse time
    CHECK_THROWS_AS(cli::load_config(sample_config(), {"region.M=0.2"}), cli::config_error);
    CHECK_THROWS_AS(cli::load_config(sample_config(), {"region.C0=1.0"}), cli::config_error);
    CHECK_THROWS_AS(cli::load_config(sample_config(), {"stability.A=4.0"}), cli::config_error);
    CHECK_THROWS_AS(cli::load_config(sample_config(), {"potential.radius=0.7"}),
                    cli::config_error);
}

TEST_CASE("dotted-path overrides re-target nested fields") {
    const ExperimentConfig cfg =
        cli::load_config(sample_config(), {"geometry.L=2.0", "stability.seed=11"});
    CHECK(cfg.L == doctest::Approx(2.0));
    CHECK(cfg.seed == 11);

    // round-tripping the resolved config reproduces the same object
    const nlohmann::json resolved = cfg.to_json();
    const ExperimentConfig cfg2 = ExperimentConfig::from_json(resolved);
    CHECK(cfg2.to_json() == resolved);
}

TEST_CASE("cli: invalid config exits 2 with a machine-readable error") {
    const int rc = run("--config " + sample_config() + " --set geometry.L=-1 forward");
    CHECK(rc == 2);
    const std::string err = slurp("cli_stderr.txt");
    CHECK(err.find("geometry.L") != std::string::npos);
    const auto j = nlohmann::json::parse(err);
    CHECK(j.at("error").at("field") == "geometry.L");
}

TEST_CASE("cli: forward writes the trace CSV, report, and sidecar") {
    fs::remove_all("cli_out_forward");
    const int rc = run("--config " + sample_config() +
                       " --output cli_out_forward --set geometry.h=0.0625 forward");
    CHECK(rc == 0);
    CHECK(fs::exists("cli_out_forward/forward_trace.csv"));
    CHECK(fs::exists("cli_out_forward/forward_report.json"));
    CHECK(fs::exists("cli_out_forward/forward_config.json"));
    const std::string csv = slurp("cli_out_forward/forward_trace.csv");
    CHECK(csv.rfind("theta,x3,Re u,Im u\n", 0) == 0);
    const auto rep = nlohmann::json::parse(slurp("cli_out_forward/forward_report.json"));
    CHECK(rep.contains("residual"));
    CHECK(rep.contains("iterations"));
    fs::remove_all("cli_out_forward");
}

TEST_CASE("cli: sweep twice with one seed produces byte-identical CSV") {
    fs::remove_all("cli_out_s1");
    fs::remove_all("cli_out_s2");
    const std::string base = "--config " + sample_config() +
                             " --set geometry.h=0.0625 --set eigen.count=6"
                             " --set stability.N1_list=[2,4] --set stability.noise_list=[0.01]"
                             " --set stability.n_theta=32 --set stability.n_x3=17";
    CHECK(run(base + " --output cli_out_s1 sweep") == 0);
    CHECK(run(base + " --output cli_out_s2 sweep") == 0);
    const std::string a = slurp("cli_out_s1/sweep.csv");
    const std::string b = slurp("cli_out_s2/sweep.csv");
    CHECK(!a.empty());
    CHECK(a == b);
    CHECK(fs::exists("cli_out_s1/sweep.svg"));
    fs::remove_all("cli_out_s1");
    fs::remove_all("cli_out_s2");
}

TEST_CASE("cli: synth then invert round-trips through the dataset file") {
    fs::remove_all("cli_out_inv");
    const std::string base = "--config " + sample_config() +
                             " --output cli_out_inv"
                             " --set geometry.h=0.0625 --set eigen.count=6"
                             " --set stability.N1=4 --set stability.window_samples=4"
                             " --set stability.n_theta=32 --set stability.n_x3=17"
                             " --set stability.noise_list=[0.0]"
                             " --set source.kind=eigenmode --set source.eigen_index=1";
    CHECK(run(base + " synth") == 0);
    CHECK(fs::exists("cli_out_inv/dataset.bin"));
    CHECK(run(base + " invert") == 0);
    CHECK(fs::exists("cli_out_inv/reconstruction.bin"));
    CHECK(fs::exists("cli_out_inv/coefficients.csv"));

    // first coefficient of the phi_1 source should be near 1 even at this
    // coarse grid
    const std::string csv = slurp("cli_out_inv/coefficients.csv");
    std::istringstream ss(csv);
    std::string line;
    std::getline(ss, line); // header
    std::getline(ss, line);
    const size_t c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
    const double re = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
    CHECK(std::abs(re - 1.0) < 0.05);
    fs::remove_all("cli_out_inv");
}

TEST_CASE("cli: check-bounds writes the report with fitted constants") {
    fs::remove_all("cli_out_cb");
    const int rc = run("--config " + sample_config() +
                       " --output cli_out_cb --set scan.n_re=4 --set scan.n_im=3"
                       " --set eigen.count=10 --set eigen.axial_cap=4 check-bounds");
    CHECK(rc == 0);
    const auto rep = nlohmann::json::parse(slurp("cli_out_cb/check_bounds_report.json"));
    CHECK(rep.is_array());
    CHECK(rep.size() >= 5);
    for (const auto& item : rep) {
        CHECK(item.contains("name"));
        CHECK(item.contains("pass"));
    }
    fs::remove_all("cli_out_cb");
}

TEST_CASE("cli: scan writes the CSV with the documented columns") {
    fs::remove_all("cli_out_scan");
    const int rc = run("--config " + sample_config() +
                       " --output cli_out_scan --set scan.n_re=5 --set scan.n_im=3 scan");
    CHECK(rc == 0);
    const std::string csv = slurp("cli_out_scan/scan.csv");
    CHECK(csv.rfind("Re lambda,Im lambda,min_singular_value,flagged\n", 0) == 0);
    fs::remove_all("cli_out_scan");
}
