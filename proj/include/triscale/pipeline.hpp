#pragma once

#include "triscale/dns.hpp"
#include "triscale/upscale.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace triscale {

/// Declarative description of one experiment; parsed from a JSON document.
struct RunConfig {
    int dim = 2;
    // geometry
    std::vector<ShapeSpec> fractures, pores;
    int n_y = 64, n_z = 32;
    bool allow_unperforated = false;
    // coefficients
    CoefficientData data;
    ReactionTerm reaction;
    double initial_amplitude = 1.0; // u⁰ = a Π sin(π x_i)
    // discretization
    int m_tau = 32;
    int n_r = 33;
    int macro_cells = 128;
    double dt = 1e-4;
    double final_time = 0.05;
    int snapshots = 10;
    Convection convection = Convection::Hybrid;
    Closure closure = Closure::Displayed;
    double solver_tol = 1e-10;
    double meso_tol = 1e-10;
    // direct simulation
    std::vector<double> dns_eps{0.5, 0.25, 0.125};
    int cells_per_pore = 8;
    int steps_per_period = 64;
    Index dof_cap = 2'000'000;
    // probe
    std::vector<double> msconv_eps{0.5, 0.25, 0.125};
    double msconv_time = 0.5;

    std::string output = "triscale_out";
    std::uint64_t seed = 1;
    int workers = 1;

    nlohmann::json source;   // the document as given
    std::string hash;        // FNV-1a of the canonical dump of `source`
    double lambda = 0.0;     // ellipticity constant of A and ρ
    double reaction_lipschitz = 0.0;

    CellGeometry geometry() const;
    std::function<double(const Vec &)> initial() const;
};

/// Parses and validates; every failure is a ConfigError or HypothesisError.
RunConfig parse_config(const nlohmann::json &doc);
RunConfig load_config(const std::string &path);

enum class Stage { CellMicro, CellMeso, Upscale, Macro, Dns, Compare, Msconv };
std::string to_string(Stage s);
Stage stage_from_string(const std::string &s);
std::vector<Stage> all_stages();

struct EpsRow {
    double eps = 0.0;
    Index dofs = 0;
    int steps = 0;
    double plain = 0.0;      // ‖u_ε - u₀‖
    double corrected = 0.0;  // with the first-order corrector
    double relative = 0.0;
    double sup_l2 = 0.0;
    double integrated_gradient = 0.0;
    double seconds = 0.0;
    std::vector<double> times, l2_norm; // energy table
};

struct ConvergenceReport {
    std::string config_hash;
    std::optional<EffectiveModel> model;
    double lambda = 0.0;
    double micro_residual = 0.0;
    Index micro_distinct = 0;
    double meso_defect = 0.0, meso_residual = 0.0, meso_mean = 0.0;
    int meso_periods = 0;
    double potential_bound = 0.0, potential_residual = 0.0;
    std::vector<double> macro_times, macro_l2;
    double macro_sup_l2 = 0.0;
    std::vector<EpsRow> dns;
    std::vector<ProbeRow> msconv;
    std::vector<std::pair<std::string, double>> stage_seconds;
    std::vector<std::pair<std::string, bool>> checks; // convergence expectations

    bool checks_pass() const;
    nlohmann::json to_json() const;
};

/// Runs the requested stages in order. A stage whose inputs were not produced in
/// this call loads them from the artifacts in config.output. Errors are rethrown
/// with the stage name and artifact paths prefixed.
ConvergenceReport run_pipeline(const RunConfig &config, const std::set<Stage> &stages);

/// error_vs_eps.svg, energy_vs_time.svg, corrector.svg in `directory`.
void emit_plots(const ConvergenceReport &report, const std::string &directory);

/// Snapshot series: raw little-endian doubles behind a small header.
void save_series(const std::string &path, const std::vector<double> &times,
                 const std::vector<Eigen::VectorXd> &snapshots);
void load_series(const std::string &path, std::vector<double> &times, std::vector<Eigen::VectorXd> &snapshots);

/// Three analytic product test functions used by the probe stage.
std::vector<ProbeFunction> default_probe_functions();

} // namespace triscale
