#include "triscale/pipeline.hpp"

#include "json_util.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace triscale {

using namespace jsonio;
namespace fs = std::filesystem;

namespace {

const double kPi = std::acos(-1.0);

std::string fnv1a(const std::string &text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

template <typename T>
T bounded(const json &block, const char *key, T fallback, T lo, T hi) {
    T v = fallback;
    if (block.contains(key)) {
        try {
            v = block.at(key).get<T>();
        } catch (const json::exception &) {
            throw ConfigError(std::string("'") + key + "' has the wrong type");
        }
    }
    if (!(v >= lo && v <= hi)) {
        std::ostringstream msg;
        msg << "'" << key << "' = " << v << " outside [" << lo << ", " << hi << "]";
        throw ConfigError(msg.str());
    }
    return v;
}

void allow_keys(const json &block, const std::string &where, std::initializer_list<const char *> keys) {
    if (!block.is_object()) throw ConfigError(where + " must be an object");
    for (const auto &[k, v] : block.items()) {
        bool known = false;
        for (const char *key : keys) known = known || k == key;
        if (!known) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

Vec vec_from(const json &j, int dim, const std::string &what) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim) throw ConfigError(what + " needs " + std::to_string(dim) + " entries");
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

ShapeSpec shape_from(const json &j, int dim) {
    allow_keys(j, "shape", {"shape", "center", "half_widths", "radius"});
    const std::string kind = j.value("shape", std::string("box"));
    const Vec c = vec_from(j.at("center"), dim, "center");
    ShapeSpec s;
    if (kind == "box")
        s = ShapeSpec::box(c, vec_from(j.at("half_widths"), dim, "half_widths"));
    else if (kind == "disk")
        s = ShapeSpec::disk(c, j.at("radius").get<double>());
    else
        throw ConfigError("unknown shape '" + kind + "'");
    s.validate();
    return s;
}

Tensor tensor_from(const json &j, int dim) {
    const Tensor m = matrix_from(j);
    if (m.rows() != dim || m.cols() != dim) throw ConfigError("matrix must be " + std::to_string(dim) + "x" + std::to_string(dim));
    return m;
}

void parse_coefficients(const json &block, RunConfig &c) {
    allow_keys(block, "coefficients", {"A", "rho"});
    const json a = block.value("A", json{{"preset", "constant"}});
    allow_keys(a, "coefficients.A", {"preset", "matrix", "a0", "a1", "axis", "base", "amp_y", "amp_tau"});
    const std::string preset = a.value("preset", std::string("constant"));
    const Tensor identity = Tensor::Identity(c.dim, c.dim);
    c.data.dim = c.dim;
    c.data.a_kind = preset;
    if (preset == "constant") {
        c.data.A = constant_matrix(a.contains("matrix") ? tensor_from(a["matrix"], c.dim) : identity);
    } else if (preset == "laminate") {
        c.data.A = laminate_matrix(c.dim, bounded(a, "a0", 1.0, 1e-6, 1e6), bounded(a, "a1", 4.0, 1e-6, 1e6),
                                   bounded(a, "axis", 0, 0, c.dim - 1));
    } else if (preset == "checkerboard") {
        c.data.A = checkerboard_matrix(c.dim, bounded(a, "a0", 1.0, 1e-6, 1e6), bounded(a, "a1", 3.0, 1e-6, 1e6));
    } else if (preset == "trigonometric") {
        const double amp_tau = bounded(a, "amp_tau", 0.25, -1e6, 1e6);
        c.data.A = trigonometric_matrix(a.contains("matrix") ? tensor_from(a["matrix"], c.dim) : identity,
                                        bounded(a, "base", 1.0, 1e-6, 1e6), bounded(a, "amp_y", 0.5, -1e6, 1e6), amp_tau);
        c.data.tau_dependent = amp_tau != 0.0;
    } else {
        throw ConfigError("unknown A preset '" + preset + "'");
    }
    const json r = block.value("rho", json{{"preset", "constant"}});
    allow_keys(r, "coefficients.rho", {"preset", "value", "base", "amp"});
    const std::string rp = r.value("preset", std::string("constant"));
    c.data.rho_kind = rp;
    if (rp == "constant")
        c.data.rho = constant_density(bounded(r, "value", 1.0, 1e-6, 1e6));
    else if (rp == "trigonometric")
        c.data.rho = trigonometric_density(bounded(r, "base", 1.0, 1e-6, 1e6), bounded(r, "amp", 0.3, -1e6, 1e6));
    else
        throw ConfigError("unknown rho preset '" + rp + "'");
}

void parse_reaction(const json &block, RunConfig &c) {
    allow_keys(block, "reaction", {"preset", "f", "modes", "r_max"});
    const std::string preset = block.value("preset", std::string("none"));
    const double r_max = bounded(block, "r_max", 2.0 * std::abs(c.initial_amplitude), 1e-6, 1e6);
    if (preset == "none") {
        c.reaction = no_reaction(-r_max, r_max);
        return;
    }
    if (preset != "separable") throw ConfigError("unknown reaction preset '" + preset + "'");
    std::vector<FourierMode> modes;
    for (const auto &m : block.at("modes")) {
        allow_keys(m, "reaction mode", {"amplitude", "k", "phase", "tau_amplitude"});
        FourierMode f;
        f.amplitude = bounded(m, "amplitude", 1.0, -1e4, 1e4);
        const auto k = m.value("k", std::vector<int>{1});
        if (k.empty() || static_cast<int>(k.size()) > c.dim) throw ConfigError("mode wave vector has the wrong length");
        f.k = {0, 0, 0};
        for (std::size_t i = 0; i < k.size(); ++i) f.k[i] = k[i];
        f.phase = bounded(m, "phase", 0.0, -1e3, 1e3);
        f.tau_amplitude = bounded(m, "tau_amplitude", 0.0, -1e3, 1e3);
        modes.push_back(f);
    }
    if (modes.empty()) throw ConfigError("separable reaction needs at least one mode");
    c.reaction = separable_preset(modes, block.value("f", std::string("tanh")), -r_max, r_max);
}

std::string artifact(const RunConfig &c, const std::string &name) { return (fs::path(c.output) / name).string(); }

/// Rethrows the active exception with the stage name and artifacts prefixed, keeping its type.
[[noreturn]] void rethrow_in(Stage stage, const std::string &artifacts) {
    const std::string where = "stage " + to_string(stage) + (artifacts.empty() ? "" : " [" + artifacts + "]") + ": ";
    try {
        throw;
    } catch (const HypothesisError &e) {
        throw HypothesisError(e.hypothesis(), where + e.what());
    } catch (const ConfigError &e) {
        throw ConfigError(where + e.what());
    } catch (const GeometryError &e) {
        throw GeometryError(where + e.what());
    } catch (const SolverError &e) {
        throw SolverError(where + e.what(), e.residual_history());
    } catch (const Error &e) {
        throw SolverError(where + e.what());
    } catch (const std::exception &e) {
        throw Error(where + e.what());
    }
}

void save_matrices(const std::string &path, const std::vector<double> &times, const std::vector<Eigen::MatrixXd> &mats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    auto put64 = [&](std::int64_t v) { out.write(reinterpret_cast<const char *>(&v), sizeof v); };
    out.write("TRSC", 4);
    put64(static_cast<std::int64_t>(mats.size()));
    for (std::size_t k = 0; k < mats.size(); ++k) {
        const double t = k < times.size() ? times[k] : 0.0;
        out.write(reinterpret_cast<const char *>(&t), sizeof t);
        put64(mats[k].rows());
        put64(mats[k].cols());
        out.write(reinterpret_cast<const char *>(mats[k].data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(mats[k].size())));
    }
    if (!out) throw Error("write failed: " + path);
}

void load_matrices(const std::string &path, std::vector<double> &times, std::vector<Eigen::MatrixXd> &mats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing artifact " + path + " (run the earlier stage first)");
    auto get64 = [&] {
        std::int64_t v = 0;
        in.read(reinterpret_cast<char *>(&v), sizeof v);
        return v;
    };
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TRSC", 4) != 0) throw ConfigError("not a snapshot file: " + path);
    const auto n = get64();
    if (n < 0 || n > 1'000'000) throw ConfigError("corrupt snapshot file: " + path);
    times.assign(static_cast<std::size_t>(n), 0.0);
    mats.assign(static_cast<std::size_t>(n), Eigen::MatrixXd());
    for (std::int64_t k = 0; k < n; ++k) {
        in.read(reinterpret_cast<char *>(&times[static_cast<std::size_t>(k)]), sizeof(double));
        const auto r = get64(), c = get64();
        if (!in || r < 0 || c < 0 || r * c > 100'000'000) throw ConfigError("corrupt snapshot file: " + path);
        auto &m = mats[static_cast<std::size_t>(k)];
        m.resize(r, c);
        in.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(r * c)));
    }
    if (!in) throw ConfigError("truncated snapshot file: " + path);
}

MesoOptions meso_options(const RunConfig &c) {
    MesoOptions o;
    o.m_tau = c.m_tau;
    o.tol_period = c.meso_tol;
    o.workers = c.workers;
    return o;
}

DnsProblem dns_problem(const RunConfig &c, const CellGeometry &geom, double eps) {
    DnsProblem p;
    p.eps = eps;
    p.geom = geom;
    p.data = c.data;
    p.reaction = c.reaction;
    p.initial = c.initial();
    p.final_time = c.final_time;
    p.snapshots = c.snapshots;
    p.cells_per_pore = c.cells_per_pore;
    p.steps_per_period = c.steps_per_period;
    p.dof_cap = c.dof_cap;
    p.solver_tol = c.solver_tol;
    return p;
}

std::string eps_tag(double eps) { return std::to_string(static_cast<int>(std::round(1.0 / eps))); }

/// State shared between stages of one run; members are filled lazily from artifacts.
struct Context {
    const RunConfig &cfg;
    CellGeometry geom;
    std::shared_ptr<PoreTensorTable> table;
    std::shared_ptr<MesoSolver> meso;
    std::optional<MesoField> theta;
    std::optional<OmegaFamily> omega;
    std::optional<EffectiveModel> model;
    std::optional<MacroSolution> macro;
    std::vector<DnsSolution> dns;

    explicit Context(const RunConfig &c) : cfg(c), geom(c.geometry()) {}

    const PoreTensorTable &need_table() {
        if (!table) {
            table = std::make_shared<PoreTensorTable>(load_pore_table(artifact(cfg, "pore_table.json")));
            if (table->m_tau != cfg.m_tau || table->dim != cfg.dim ||
                table->num_cells != static_cast<Index>(std::pow(cfg.n_y, cfg.dim)))
                throw ConfigError("pore_table.json does not match the configuration");
        }
        return *table;
    }

    MesoSolver &need_meso() {
        if (!meso) {
            need_table();
            meso = std::make_shared<MesoSolver>(geom, table, cfg.data.rho, meso_options(cfg));
        }
        return *meso;
    }

    void need_correctors() {
        if (theta && omega) return;
        auto &m = need_meso();
        std::vector<double> t;
        std::vector<Eigen::MatrixXd> states;
        load_matrices(artifact(cfg, "theta.bin"), t, states);
        MesoField th;
        th.grid = m.grid();
        th.m_tau = cfg.m_tau;
        th.components = cfg.dim;
        th.states = std::move(states);
        if (static_cast<int>(th.states.size()) != cfg.m_tau || th.states[0].rows() != m.grid()->num_dofs())
            throw ConfigError("theta.bin does not match the meso grid");
        const json info = json::parse(read_file(artifact(cfg, "meso.json")));
        OmegaFamily om;
        om.separable = info.at("omega_separable").get<bool>();
        om.r_lattice = vector_from(info.at("omega_r_lattice"));
        om.r_min = info.at("omega_r_min").get<double>();
        om.r_max = info.at("omega_r_max").get<double>();
        om.f = cfg.reaction.f;
        om.field.grid = m.grid();
        om.field.m_tau = cfg.m_tau;
        if (info.at("omega_components").get<int>() > 0) {
            load_matrices(artifact(cfg, "omega.bin"), t, om.field.states);
            om.field.components = static_cast<int>(om.field.states.at(0).cols());
        }
        theta = std::move(th);
        omega = std::move(om);
    }

    const EffectiveModel &need_model() {
        if (!model) model = load_effective_model(artifact(cfg, "effective_model.json"));
        return *model;
    }

    const MacroSolution &need_macro() {
        if (!macro) {
            MacroSolution s;
            std::vector<Eigen::VectorXd> snaps;
            load_series(artifact(cfg, "macro.bin"), s.times, snaps);
            s.snapshots = std::move(snaps);
            s.grid = make_dirichlet_box_grid(cfg.dim, {cfg.macro_cells, cfg.macro_cells, cfg.macro_cells}, Vec::Ones(cfg.dim));
            if (s.snapshots.empty() || s.snapshots[0].size() != s.grid->num_dofs())
                throw ConfigError("macro.bin does not match the macro grid");
            macro = std::move(s);
        }
        return *macro;
    }
};

double fn_psi(const Vec &x, double t) {
    double s = 1.0 + t;
    for (Index i = 0; i < x.size(); ++i) s *= std::sin(kPi * x(i));
    return s;
}

} // namespace

CellGeometry RunConfig::geometry() const {
    return build_cell_geometry(fractures, pores, n_y, n_z, dim, {.allow_unperforated = allow_unperforated});
}

std::function<double(const Vec &)> RunConfig::initial() const {
    const double a = initial_amplitude;
    return [a](const Vec &x) {
        double s = a;
        for (Index i = 0; i < x.size(); ++i) s *= std::sin(kPi * x(i));
        return s;
    };
}

RunConfig parse_config(const json &doc) {
    try {
        allow_keys(doc, "config", {"dimension", "geometry", "coefficients", "reaction", "initial", "discretization",
                                   "dns", "msconv", "output", "seed", "workers"});
        RunConfig c;
        c.source = doc;
        c.hash = fnv1a(doc.dump());
        c.dim = bounded(doc, "dimension", 2, 2, 3);
        const json geo = doc.value("geometry", json::object());
        allow_keys(geo, "geometry", {"fractures", "pores", "n_y", "n_z", "allow_unperforated"});
        for (const auto &s : geo.value("fractures", json::array())) c.fractures.push_back(shape_from(s, c.dim));
        for (const auto &s : geo.value("pores", json::array())) c.pores.push_back(shape_from(s, c.dim));
        c.n_y = bounded(geo, "n_y", 64, 4, c.dim == 2 ? 1024 : 128);
        c.n_z = bounded(geo, "n_z", 32, 4, c.dim == 2 ? 1024 : 128);
        c.allow_unperforated = geo.value("allow_unperforated", false);

        const json init = doc.value("initial", json::object());
        allow_keys(init, "initial", {"preset", "amplitude"});
        if (init.value("preset", std::string("sin_product")) != "sin_product")
            throw ConfigError("unknown initial preset (only sin_product)");
        c.initial_amplitude = bounded(init, "amplitude", 1.0, -1e3, 1e3);

        parse_coefficients(doc.value("coefficients", json::object()), c);
        parse_reaction(doc.value("reaction", json::object()), c);

        const json disc = doc.value("discretization", json::object());
        allow_keys(disc, "discretization", {"m_tau", "n_r", "macro_cells", "dt", "final_time", "snapshots", "convection",
                                            "closure", "solver_tol", "meso_tol"});
        c.m_tau = bounded(disc, "m_tau", 32, 2, 1024);
        c.n_r = bounded(disc, "n_r", 33, 3, 257);
        c.macro_cells = bounded(disc, "macro_cells", 128, 4, c.dim == 2 ? 1024 : 64);
        c.dt = bounded(disc, "dt", 1e-4, 1e-8, 1.0);
        c.final_time = bounded(disc, "final_time", 0.05, 1e-8, 1e3);
        c.snapshots = bounded(disc, "snapshots", 10, 1, 10000);
        c.convection = convection_from_string(disc.value("convection", std::string("hybrid")));
        c.closure = closure_from_string(disc.value("closure", std::string("displayed")));
        c.solver_tol = bounded(disc, "solver_tol", 1e-10, 1e-15, 1e-4);
        c.meso_tol = bounded(disc, "meso_tol", 1e-10, 1e-15, 1e-4);

        const json dns = doc.value("dns", json::object());
        allow_keys(dns, "dns", {"eps", "cells_per_pore", "steps_per_period", "dof_cap"});
        c.dns_eps = dns.value("eps", c.dns_eps);
        c.cells_per_pore = bounded(dns, "cells_per_pore", 8, 1, 64);
        c.steps_per_period = bounded(dns, "steps_per_period", 64, 1, 4096);
        c.dof_cap = bounded<Index>(dns, "dof_cap", 2'000'000, 1, 50'000'000);
        const json ms = doc.value("msconv", json::object());
        allow_keys(ms, "msconv", {"eps", "final_time"});
        c.msconv_eps = ms.value("eps", c.msconv_eps);
        c.msconv_time = bounded(ms, "final_time", 0.5, 1e-6, 10.0);
        for (const auto *list : {&c.dns_eps, &c.msconv_eps})
            for (double e : *list) {
                const double k = 1.0 / e;
                if (!(e > 0.0 && e <= 1.0) || std::abs(k - std::round(k)) > 1e-9)
                    throw ConfigError("every eps must be 1/k for an integer k");
            }

        c.output = doc.value("output", c.output);
        c.seed = doc.value("seed", std::uint64_t{1});
        c.workers = bounded(doc, "workers", 1, 1, 256);

        // Hypotheses: ellipticity of A and ρ, Lipschitz and zero-mean reaction.
        c.lambda = validate_coefficients(c.data, c.dim == 2 ? 32 : 12, 16).lambda;
        if (!c.reaction.zero()) c.reaction_lipschitz = validate_reaction(c.reaction, c.dim).max_dr;
        // Geometry errors surface here rather than mid-pipeline.
        (void)c.geometry();
        return c;
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

RunConfig load_config(const std::string &path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception &e) {
        throw ConfigError(path + ": " + e.what());
    }
    RunConfig c = parse_config(doc);
    if (!doc.contains("output")) c.output = (fs::path(path).parent_path() / "triscale_out").string();
    return c;
}

std::string to_string(Stage s) {
    switch (s) {
    case Stage::CellMicro: return "cell-micro";
    case Stage::CellMeso: return "cell-meso";
    case Stage::Upscale: return "upscale";
    case Stage::Macro: return "macro";
    case Stage::Dns: return "dns";
    case Stage::Compare: return "compare";
    case Stage::Msconv: return "msconv";
    }
    return "?";
}

Stage stage_from_string(const std::string &s) {
    for (Stage st : all_stages())
        if (to_string(st) == s) return st;
    throw ConfigError("unknown stage '" + s + "'");
}

std::vector<Stage> all_stages() {
    return {Stage::CellMicro, Stage::CellMeso, Stage::Upscale, Stage::Macro, Stage::Dns, Stage::Compare, Stage::Msconv};
}

void save_series(const std::string &path, const std::vector<double> &times, const std::vector<Eigen::VectorXd> &snapshots) {
    std::vector<Eigen::MatrixXd> m(snapshots.begin(), snapshots.end());
    save_matrices(path, times, m);
}

void load_series(const std::string &path, std::vector<double> &times, std::vector<Eigen::VectorXd> &snapshots) {
    std::vector<Eigen::MatrixXd> m;
    load_matrices(path, times, m);
    snapshots.clear();
    for (auto &x : m) {
        if (x.cols() != 1) throw ConfigError("expected a vector series in " + path);
        snapshots.emplace_back(x.col(0));
    }
}

std::vector<ProbeFunction> default_probe_functions() {
    auto one = [](const Vec &) { return 1.0; };
    return {
        {"indicator", fn_psi, one, one, [](double) { return 1.0; }},
        {"oscillating_y",
         [](const Vec &x, double t) {
             double s = (1.0 + t) * std::exp(x(0));
             for (Index i = 1; i < x.size(); ++i) s *= std::sin(kPi * x(i));
             return s;
         },
         [](const Vec &y) { return 1.0 + std::sin(2 * kPi * y(0)); }, one, [](double) { return 1.0; }},
        {"oscillating_z_tau", fn_psi, one, [](const Vec &z) { return 1.0 + 0.5 * std::cos(2 * kPi * z(z.size() - 1)); },
         [](double s) { return 2.0 + std::cos(2 * kPi * s); }},
    };
}

bool ConvergenceReport::checks_pass() const {
    for (const auto &[name, ok] : checks)
        if (!ok) return false;
    return true;
}

json ConvergenceReport::to_json() const {
    json j;
    j["config_hash"] = config_hash;
    j["lambda"] = lambda;
    if (model) j["effective_model"] = json::parse(triscale::to_json(*model));
    j["micro"] = {{"max_weak_residual", micro_residual}, {"distinct_matrices", micro_distinct}};
    j["meso"] = {{"periodicity_defect", meso_defect}, {"max_residual", meso_residual},
                 {"max_weighted_mean", meso_mean}, {"periods", meso_periods}};
    j["potential"] = {{"bound_constant", potential_bound}, {"laplacian_residual", potential_residual}};
    j["macro"] = {{"times", macro_times}, {"l2_norm", macro_l2}, {"sup_l2", macro_sup_l2}};
    json rows = json::array();
    for (const auto &r : dns)
        rows.push_back({{"eps", r.eps}, {"dofs", r.dofs}, {"steps", r.steps}, {"error_plain", r.plain},
                        {"error_corrected", r.corrected}, {"relative_plain", r.relative}, {"sup_l2", r.sup_l2},
                        {"integrated_gradient", r.integrated_gradient}, {"seconds", r.seconds},
                        {"energy", {{"times", r.times}, {"l2_norm", r.l2_norm}}}});
    j["dns"] = rows;
    json probe = json::array();
    for (const auto &r : msconv)
        probe.push_back({{"eps", r.eps}, {"function", r.function}, {"perforated", r.perforated}, {"value", r.value},
                         {"limit", r.limit}, {"error", r.error()}});
    j["msconv"] = probe;
    json times = json::object();
    for (const auto &[s, t] : stage_seconds) times[s] = t;
    j["seconds"] = times;
    json checks_j = json::object();
    for (const auto &[name, ok] : checks) checks_j[name] = ok;
    j["checks"] = checks_j;
    return j;
}

ConvergenceReport run_pipeline(const RunConfig &cfg, const std::set<Stage> &stages) {
    fs::create_directories(cfg.output);
    Context ctx(cfg);
    ConvergenceReport report;
    report.config_hash = cfg.hash;
    report.lambda = cfg.lambda;

    for (Stage stage : all_stages()) {
        if (!stages.count(stage)) continue;
        const auto start = std::chrono::steady_clock::now();
        std::string artifacts;
        try {
            switch (stage) {
            case Stage::CellMicro: {
                artifacts = artifact(cfg, "pore_table.json");
                write_pgm(ctx.geom.matrix, artifact(cfg, "matrix_Ym.pgm"));
                write_pgm(ctx.geom.solid, artifact(cfg, "solid_Zs.pgm"));
                ctx.table = std::make_shared<PoreTensorTable>(
                    tabulate_pore_tensors(cfg.data, ctx.geom, cfg.m_tau, cfg.workers, {.tol = cfg.solver_tol}));
                save_pore_table(*ctx.table, artifacts);
                write_pore_table_csv(*ctx.table, artifact(cfg, "pore_table.csv"));
                report.micro_residual = ctx.table->max_weak_residual;
                report.micro_distinct = static_cast<Index>(ctx.table->distinct.size());
                break;
            }
            case Stage::CellMeso: {
                artifacts = artifact(cfg, "pore_table.json");
                auto &meso = ctx.need_meso();
                artifacts = artifact(cfg, "theta.bin") + ", " + artifact(cfg, "omega.bin");
                ctx.theta = meso.solve_theta();
                ctx.omega = solve_omega(meso, cfg.reaction, cfg.n_r);
                save_matrices(artifact(cfg, "theta.bin"), {}, ctx.theta->states);
                if (!ctx.omega->zero()) save_matrices(artifact(cfg, "omega.bin"), {}, ctx.omega->field.states);
                for (int i = 0; i < cfg.dim; ++i)
                    write_vtk_series(*ctx.theta, i, artifact(cfg, "theta" + std::to_string(i + 1)));
                json info;
                info["theta"] = {{"periods", ctx.theta->periods}, {"defect", ctx.theta->defect},
                                 {"weak_residual", ctx.theta->weak_residual},
                                 {"max_weighted_mean", ctx.theta->max_weighted_mean}};
                info["omega_separable"] = ctx.omega->separable;
                info["omega_components"] = ctx.omega->field.components;
                info["omega_r_lattice"] = vector_json(ctx.omega->r_lattice);
                info["omega_r_min"] = ctx.omega->r_min;
                info["omega_r_max"] = ctx.omega->r_max;
                info["omega_defect"] = ctx.omega->field.defect;
                info["omega_weak_residual"] = ctx.omega->field.weak_residual;
                info["distinct_slices"] = meso.distinct_slices();
                write_file(artifact(cfg, "meso.json"), info.dump(2));
                report.meso_defect = std::max(ctx.theta->defect, ctx.omega->field.defect);
                report.meso_residual = std::max(ctx.theta->weak_residual, ctx.omega->field.weak_residual);
                report.meso_mean = std::max(ctx.theta->max_weighted_mean, ctx.omega->field.max_weighted_mean);
                report.meso_periods = std::max(ctx.theta->periods, ctx.omega->field.periods);
                break;
            }
            case Stage::Upscale: {
                artifacts = artifact(cfg, "theta.bin");
                ctx.need_correctors();
                auto &meso = ctx.need_meso();
                artifacts = artifact(cfg, "effective_model.json");
                VectorPotential potential(cfg.reaction, cfg.dim, cfg.n_y, cfg.m_tau, cfg.n_r,
                                          {.tol = cfg.solver_tol});
                report.potential_bound = potential.bound_constant();
                report.potential_residual = potential.laplacian_residual();
                const Tensor a_hat = assemble_A_hat(meso, *ctx.theta);
                const Eigen::VectorXd r_grid =
                    Eigen::VectorXd::LinSpaced(cfg.n_r, cfg.reaction.r_min, cfg.reaction.r_max);
                const auto tables =
                    assemble_L_tables(meso, *ctx.theta, *ctx.omega, potential, r_grid, cfg.closure, cfg.workers);
                ctx.model = make_effective_model(meso, a_hat, tables, meso.weighted_mass().sum(), cfg.closure);
                save_effective_model(*ctx.model, artifacts);
                std::ofstream csv(artifact(cfg, "l_tables.csv"));
                csv << std::setprecision(17) << "r";
                for (int i = 0; i < cfg.dim; ++i) csv << ",L1_" << i + 1;
                for (int i = 0; i < cfg.dim; ++i) csv << ",L2_" << i + 1;
                csv << ",L3\n";
                for (Index j = 0; j < r_grid.size(); ++j) {
                    csv << r_grid(j);
                    for (int i = 0; i < cfg.dim; ++i) csv << ',' << ctx.model->l1(i, j);
                    for (int i = 0; i < cfg.dim; ++i) csv << ',' << ctx.model->l2(i, j);
                    csv << ',' << ctx.model->l3(j) << '\n';
                }
                break;
            }
            case Stage::Macro: {
                artifacts = artifact(cfg, "effective_model.json");
                MacroProblem p;
                p.dim = cfg.dim;
                p.lengths = Vec::Ones(cfg.dim);
                p.cells = cfg.macro_cells;
                p.final_time = cfg.final_time;
                p.dt = cfg.dt;
                p.snapshots = cfg.snapshots;
                p.initial = cfg.initial();
                p.model = ctx.need_model();
                p.convection = cfg.convection;
                artifacts = artifact(cfg, "macro.bin");
                ctx.macro = solve_macro(p);
                save_series(artifacts, ctx.macro->times, ctx.macro->snapshots);
                write_macro_outputs(*ctx.macro, artifact(cfg, "macro"));
                report.macro_times = ctx.macro->step_times;
                report.macro_l2 = ctx.macro->l2_norm;
                report.macro_sup_l2 = energy_report(*ctx.macro).sup_l2;
                break;
            }
            case Stage::Dns: {
                if (cfg.dim != 2) throw ConfigError("the direct simulation is two-dimensional");
                for (double eps : cfg.dns_eps) {
                    artifacts = artifact(cfg, "dns_eps_" + eps_tag(eps) + ".bin");
                    auto sol = solve_dns(dns_problem(cfg, ctx.geom, eps));
                    save_series(artifacts, sol.times, sol.snapshots);
                    write_dns_outputs(sol, artifact(cfg, "dns"));
                    ctx.dns.push_back(std::move(sol));
                }
                break;
            }
            case Stage::Compare: {
                artifacts = artifact(cfg, "macro.bin");
                const auto &macro = ctx.need_macro();
                artifacts = artifact(cfg, "theta.bin");
                ctx.need_correctors();
                if (ctx.dns.empty()) {
                    for (double eps : cfg.dns_eps) {
                        artifacts = artifact(cfg, "dns_eps_" + eps_tag(eps) + ".bin");
                        DnsSolution s;
                        s.eps = eps;
                        s.grid = build_dns_grid(dns_problem(cfg, ctx.geom, eps));
                        load_series(artifacts, s.times, s.snapshots);
                        if (s.snapshots.empty() || s.snapshots[0].size() != s.grid->num_dofs())
                            throw ConfigError("DNS snapshots do not match the DNS grid");
                        const Eigen::VectorXd m = lumped_mass(*s.grid);
                        for (const auto &u : s.snapshots) s.l2_norm.push_back(std::sqrt(integrate_product(m, u, u)));
                        s.step_times = s.times;
                        s.gradient_norm2.assign(s.times.size(), 0.0);
                        ctx.dns.push_back(std::move(s));
                    }
                }
                artifacts.clear();
                for (const auto &s : ctx.dns) {
                    EpsRow row;
                    row.eps = s.eps;
                    row.dofs = s.grid->num_dofs();
                    row.steps = s.steps;
                    const auto plain = compare_to_macro(s, macro);
                    row.plain = plain.error;
                    row.relative = plain.relative();
                    row.corrected = corrector_error(s, macro, *ctx.theta, *ctx.omega).error;
                    row.sup_l2 = s.sup_l2();
                    row.integrated_gradient = s.integrated_gradient();
                    row.seconds = s.seconds;
                    row.times = s.step_times;
                    row.l2_norm = s.l2_norm;
                    report.dns.push_back(std::move(row));
                }
                auto rows = report.dns;
                std::sort(rows.begin(), rows.end(), [](const EpsRow &a, const EpsRow &b) { return a.eps > b.eps; });
                bool decreasing = rows.size() >= 2;
                double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (i > 0) decreasing = decreasing && rows[i].plain < rows[i - 1].plain;
                    lo = std::min(lo, rows[i].sup_l2);
                    hi = std::max(hi, rows[i].sup_l2);
                }
                report.checks.emplace_back("error_decreases_with_eps", decreasing);
                if (!rows.empty()) {
                    report.checks.emplace_back("corrector_not_worse_at_finest_eps",
                                               rows.back().corrected <= rows.back().plain);
                    report.checks.emplace_back("energy_bounds_within_factor_2", hi <= 2.0 * lo);
                }
                std::ofstream csv(artifact(cfg, "convergence.csv"));
                csv << std::setprecision(17) << "eps,dofs,error_plain,error_corrected,relative_plain,sup_l2\n";
                for (const auto &r : rows)
                    csv << r.eps << ',' << r.dofs << ',' << r.plain << ',' << r.corrected << ',' << r.relative << ','
                        << r.sup_l2 << '\n';
                break;
            }
            case Stage::Msconv: {
                artifacts = artifact(cfg, "msconv.csv");
                report.msconv = msconv_probe(ctx.geom, cfg.msconv_eps, default_probe_functions(), cfg.msconv_time);
                std::ofstream csv(artifacts);
                csv << std::setprecision(17) << "eps,function,perforated,value,limit,error\n";
                for (const auto &r : report.msconv)
                    csv << r.eps << ',' << r.function << ',' << r.perforated << ',' << r.value << ',' << r.limit << ','
                        << r.error() << '\n';
                // Error at the smallest eps below half the error at the largest, per function and weight.
                const double e_big = *std::max_element(cfg.msconv_eps.begin(), cfg.msconv_eps.end());
                const double e_small = *std::min_element(cfg.msconv_eps.begin(), cfg.msconv_eps.end());
                for (const auto &r : report.msconv) {
                    if (r.eps != e_big) continue;
                    for (const auto &q : report.msconv)
                        if (q.eps == e_small && q.function == r.function && q.perforated == r.perforated)
                            report.checks.emplace_back("msconv_" + r.function + (r.perforated ? "_perforated" : "_full"),
                                                       q.error() < 0.5 * r.error() || q.error() < 1e-12);
                }
                break;
            }
            }
        } catch (...) {
            rethrow_in(stage, artifacts);
        }
        report.stage_seconds.emplace_back(to_string(stage),
                                          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    if (ctx.model) report.model = ctx.model;
    write_file(artifact(cfg, "report.json"), report.to_json().dump(2));
    return report;
}

namespace {

/// Minimal SVG line/bar chart writer.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel, bool logx, bool logy)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), logx_(logx), logy_(logy) {}

    void line(const std::string &name, std::vector<double> x, std::vector<double> y, bool markers = false) {
        series_.push_back({name, std::move(x), std::move(y), markers});
    }

    void write(const std::string &path) const {
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (const auto &s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double x = tx(s.x[i]), y = ty(s.y[i]);
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
            }
        if (x0 > x1) x0 = 0, x1 = 1;
        if (y0 > y1) y0 = 0, y1 = 1;
        if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
        if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
        const double pad = 0.05 * (y1 - y0);
        y0 -= pad, y1 += pad;
        const double W = 640, H = 420, L = 80, R = 170, T = 40, B = 60;
        auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
        auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
        std::ofstream out(path);
        if (!out) throw Error("cannot write " + path);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
            << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title_ << "</text>\n";
        out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
            << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
            const double sx = L + (W - L - R) * i / 4.0, sy = H - B - (H - T - B) * i / 4.0;
            out << "<text x=\"" << sx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << label(fx, logx_)
                << "</text>\n";
            out << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << label(fy, logy_)
                << "</text>\n";
        }
        out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << xlabel_
            << "</text>\n";
        out << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
            << ylabel_ << "</text>\n";
        const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
        for (std::size_t k = 0; k < series_.size(); ++k) {
            const auto &s = series_[k];
            const char *col = colors[k % 7];
            out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(tx(s.x[i])) && std::isfinite(ty(s.y[i]))) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            out << "\"/>\n";
            if (s.markers)
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    if (std::isfinite(tx(s.x[i])) && std::isfinite(ty(s.y[i])))
                        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << col
                            << "\"/>\n";
            const double ly = T + 16 + 18.0 * static_cast<double>(k);
            out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
                << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n<text x=\"" << W - R + 36 << "\" y=\"" << ly
                << "\">" << s.name << "</text>\n";
        }
        out << "</svg>\n";
    }

private:
    struct Series {
        std::string name;
        std::vector<double> x, y;
        bool markers;
    };
    double tx(double x) const { return logx_ ? (x > 0 ? std::log10(x) : NAN) : x; }
    double ty(double y) const { return logy_ ? (y > 0 ? std::log10(y) : NAN) : y; }
    static std::string label(double v, bool log) {
        std::ostringstream s;
        s << std::setprecision(3) << (log ? std::pow(10.0, v) : v);
        return s.str();
    }
    std::string title_, xlabel_, ylabel_;
    bool logx_, logy_;
    std::vector<Series> series_;
};

void bar_chart(const std::string &path, const std::vector<std::string> &groups, const std::vector<double> &a,
               const std::vector<double> &b, const std::string &name_a, const std::string &name_b) {
    const double W = 640, H = 420, L = 80, R = 170, T = 40, B = 60;
    double top = 0.0;
    for (double v : a) top = std::max(top, v);
    for (double v : b) top = std::max(top, v);
    if (top <= 0.0) top = 1.0;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">corrector comparison</text>\n"
        << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double sy = H - B - (H - T - B) * i / 4.0;
        out << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << std::setprecision(3)
            << top * i / 4.0 << "</text>\n";
    }
    const double slot = (W - L - R) / std::max<std::size_t>(1, groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double x = L + slot * static_cast<double>(g);
        const double bw = slot * 0.35;
        const double ha = (H - T - B) * a[g] / top, hb = (H - T - B) * b[g] / top;
        out << "<rect x=\"" << x + slot * 0.12 << "\" y=\"" << H - B - ha << "\" width=\"" << bw << "\" height=\"" << ha
            << "\" fill=\"#1f77b4\"/>\n<rect x=\"" << x + slot * 0.12 + bw << "\" y=\"" << H - B - hb << "\" width=\""
            << bw << "\" height=\"" << hb << "\" fill=\"#d62728\"/>\n<text x=\"" << x + slot / 2 << "\" y=\"" << H - B + 16
            << "\" text-anchor=\"middle\">" << groups[g] << "</text>\n";
    }
    out << "<rect x=\"" << W - R + 10 << "\" y=\"" << T + 6 << "\" width=\"20\" height=\"10\" fill=\"#1f77b4\"/><text x=\""
        << W - R + 36 << "\" y=\"" << T + 16 << "\">" << name_a << "</text>\n<rect x=\"" << W - R + 10 << "\" y=\""
        << T + 24 << "\" width=\"20\" height=\"10\" fill=\"#d62728\"/><text x=\"" << W - R + 36 << "\" y=\"" << T + 34
        << "\">" << name_b << "</text>\n<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18
        << "\" text-anchor=\"middle\">eps</text>\n</svg>\n";
}

} // namespace

void emit_plots(const ConvergenceReport &report, const std::string &directory) {
    fs::create_directories(directory);
    auto rows = report.dns;
    std::sort(rows.begin(), rows.end(), [](const EpsRow &a, const EpsRow &b) { return a.eps > b.eps; });
    std::vector<double> eps, plain, corr;
    std::vector<std::string> names;
    for (const auto &r : rows) {
        eps.push_back(r.eps);
        plain.push_back(r.plain);
        corr.push_back(r.corrected);
        names.push_back("1/" + eps_tag(r.eps));
    }
    SvgPlot err("DNS vs homogenized error", "eps", "L2 error", true, true);
    err.line("u0", eps, plain, true);
    err.line("u0 + eps u1", eps, corr, true);
    if (!eps.empty()) {
        // Reference slope 1 through the coarsest plain error.
        std::vector<double> ref;
        for (double e : eps) ref.push_back(plain.front() * e / eps.front());
        err.line("slope 1", eps, ref);
    }
    err.write((fs::path(directory) / "error_vs_eps.svg").string());

    SvgPlot en("energy", "t", "L2 norm", false, false);
    if (!report.macro_times.empty()) en.line("homogenized", report.macro_times, report.macro_l2);
    for (const auto &r : rows) en.line("eps = 1/" + eps_tag(r.eps), r.times, r.l2_norm);
    en.write((fs::path(directory) / "energy_vs_time.svg").string());

    bar_chart((fs::path(directory) / "corrector.svg").string(), names, plain, corr, "u0", "u0 + eps u1");
}

} // namespace triscale
