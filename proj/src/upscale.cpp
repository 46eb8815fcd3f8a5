#include "triscale/upscale.hpp"

#include "triscale/parallel.hpp"

#include "json_util.hpp"

#include <fstream>
#include <sstream>

namespace triscale {

namespace {

using namespace jsonio;

template <typename Table>
double divided_difference(const Table &t, const Eigen::VectorXd &r) {
    double best = 0.0;
    for (Index j = 1; j < r.size(); ++j) {
        const double h = r(j) - r(j - 1);
        if constexpr (std::is_same_v<Table, Eigen::VectorXd>)
            best = std::max(best, std::abs(t(j) - t(j - 1)) / h);
        else
            best = std::max(best, (t.col(j) - t.col(j - 1)).norm() / h);
    }
    return best;
}

} // namespace

std::string to_string(Closure c) { return c == Closure::Displayed ? "displayed" : "reaction"; }

Closure closure_from_string(const std::string &s) {
    if (s == "displayed") return Closure::Displayed;
    if (s == "reaction") return Closure::Reaction;
    throw ConfigError("unknown closure: " + s);
}

bool EffectiveModel::reaction_free() const {
    return l1.cwiseAbs().maxCoeff() == 0.0 && l2.cwiseAbs().maxCoeff() == 0.0 && l3.cwiseAbs().maxCoeff() == 0.0;
}

EffectiveValues eval_effective(const EffectiveModel &model, double r) {
    EffectiveValues v;
    const Index n = model.r_grid.size();
    const double lo = model.r_grid(0), hi = model.r_grid(n - 1);
    if (r < lo || r > hi) {
        v.clamped = true;
        r = std::clamp(r, lo, hi);
    }
    Index j = std::upper_bound(model.r_grid.data(), model.r_grid.data() + n, r) - model.r_grid.data() - 1;
    j = std::clamp<Index>(j, 0, n - 2);
    const double w = (r - model.r_grid(j)) / (model.r_grid(j + 1) - model.r_grid(j));
    v.l1 = (1.0 - w) * model.l1.col(j) + w * model.l1.col(j + 1);
    v.l2 = (1.0 - w) * model.l2.col(j) + w * model.l2.col(j + 1);
    v.l3 = (1.0 - w) * model.l3(j) + w * model.l3(j + 1);
    return v;
}

Tensor assemble_A_hat(const MesoSolver &meso, const MesoField &theta) {
    const auto &grid = *meso.grid();
    const int dim = grid.dim();
    const int m = theta.m_tau;
    const double vol = grid.cell_volume();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 0; k < m; ++k) {
        std::vector<Eigen::MatrixXd> grads;
        for (int i = 0; i < dim; ++i) grads.push_back(theta.gradient(k, i));
        for (Index c = 0; c < grid.num_cells(); ++c) {
            if (!grid.cell_active(c)) continue;
            Eigen::MatrixXd p = Eigen::MatrixXd::Identity(dim, dim); // (I + ∇θ)_{lj} = δ_lj + ∂_l θ_j
            for (int j = 0; j < dim; ++j) p.col(j) += grads[static_cast<std::size_t>(j)].col(c);
            acc += meso.table().a_tilde(k, c) * p;
        }
    }
    acc *= vol / m;
    if (asymmetry(acc) > 1e-6 * std::max(1.0, acc.cwiseAbs().maxCoeff()))
        throw SolverError("effective tensor asymmetry " + std::to_string(asymmetry(acc)));
    Tensor a = symmetrized(acc);
    if (min_eigenvalue(a) <= 0.0) throw CoefficientError(-1);
    return a;
}

LTables assemble_L_tables(const MesoSolver &meso, const MesoField &theta, const OmegaFamily &omega,
                          const VectorPotential &potential, const Eigen::VectorXd &r_grid, Closure closure,
                          int workers) {
    const auto &grid = *meso.grid();
    const int dim = grid.dim();
    const int m = theta.m_tau;
    if (potential.tau_samples() != m || potential.grid().num_cells() != grid.num_cells() ||
        potential.grid().cells(0) != grid.cells(0))
        throw ConfigError("potential and meso grids do not match");
    const Index nr = r_grid.size();
    const double vol = grid.cell_volume();
    const double zs = meso.solid_measure();
    const ReactionTerm &g = potential.reaction();

    LTables t;
    t.r_grid = r_grid;
    t.l1 = Eigen::MatrixXd::Zero(dim, nr);
    t.l2 = Eigen::MatrixXd::Zero(dim, nr);
    t.l3 = Eigen::VectorXd::Zero(nr);
    if (g.zero()) return t;

    // One partial table per τ sample, summed in τ order.
    std::vector<LTables> part(static_cast<std::size_t>(m));
    parallel_for(m, workers, [&](long kk) {
        const int k = static_cast<int>(kk);
        LTables &p = part[static_cast<std::size_t>(k)];
        p.l1 = Eigen::MatrixXd::Zero(dim, nr);
        p.l2 = Eigen::MatrixXd::Zero(dim, nr);
        p.l3 = Eigen::VectorXd::Zero(nr);
        std::vector<Eigen::MatrixXd> grads;
        for (int i = 0; i < dim; ++i) grads.push_back(theta.gradient(k, i));
        const double tau = static_cast<double>(k) / m;
        for (Index j = 0; j < nr; ++j) {
            const double r = r_grid(j);
            const Eigen::MatrixXd dw = omega.gradient(k, r);
            if (closure == Closure::Displayed) {
                const Eigen::MatrixXd dg = potential.dr_field(k, r);
                for (Index c = 0; c < grid.num_cells(); ++c) {
                    if (!grid.cell_active(c)) continue;
                    Eigen::MatrixXd ip = Eigen::MatrixXd::Identity(dim, dim);
                    for (int q = 0; q < dim; ++q) ip.col(q) += grads[static_cast<std::size_t>(q)].col(c);
                    const Eigen::MatrixXd bp = meso.table().b_tilde(k, c) * ip;
                    const Eigen::VectorXd drg = dg.col(c);
                    p.l1.col(j) += meso.table().a_tilde(k, c) * dw.col(c);
                    p.l2.col(j) += zs * drg + bp.transpose() * drg;
                    p.l3(j) += drg.dot(bp * dw.col(c));
                }
            } else {
                for (Index c = 0; c < grid.num_cells(); ++c)
                    if (grid.cell_active(c)) p.l1.col(j) += meso.table().a_tilde(k, c) * dw.col(c);
                // Nodal rule with the lumped mass, matching the ω₁ source discretization.
                const Eigen::VectorXd w = omega.at(k, r);
                const Eigen::MatrixXd &th = theta.at(k);
                const double delta = 1e-4 * (g.r_max - g.r_min);
                for (Index d = 0; d < grid.num_dofs(); ++d) {
                    const Vec y = grid.dof_coord(d);
                    const double dgr = g.separable ? g.c(y, tau) * g.df(r)
                                                   : (g(y, tau, r + delta) - g(y, tau, r - delta)) / (2.0 * delta);
                    const double s = -zs * meso.mass()(d) * dgr;
                    p.l2.col(j) += s * th.row(d).transpose();
                    p.l3(j) += s * w(d);
                }
            }
        }
        p.l1 *= vol;
        if (closure == Closure::Displayed) {
            p.l2 *= vol;
            p.l3 *= vol;
        }
    });
    for (const auto &p : part) {
        t.l1 += p.l1 / m;
        t.l2 += p.l2 / m;
        t.l3 += p.l3 / m;
    }
    return t;
}

EffectiveModel make_effective_model(const MesoSolver &meso, const Tensor &a_hat, const LTables &tables,
                                    double rho_bar, Closure closure) {
    EffectiveModel e;
    e.dim = meso.grid()->dim();
    e.a_hat = a_hat;
    e.r_grid = tables.r_grid;
    e.l1 = tables.l1;
    e.l2 = tables.l2;
    e.l3 = tables.l3;
    e.solid_measure = meso.solid_measure();
    e.rho_bar = rho_bar;
    e.closure = closure;
    e.lipschitz_l1 = divided_difference(e.l1, e.r_grid);
    e.lipschitz_l2 = divided_difference(e.l2, e.r_grid);
    e.lipschitz_l3 = divided_difference(e.l3, e.r_grid);
    return e;
}

std::string to_json(const EffectiveModel &m) {
    json j;
    j["dimension"] = m.dim;
    j["A_hat"] = matrix_json(m.a_hat);
    j["r_grid"] = vector_json(m.r_grid);
    j["L1"] = matrix_json(m.l1.transpose());
    j["L2"] = matrix_json(m.l2.transpose());
    j["L3"] = vector_json(m.l3);
    j["solid_measure"] = m.solid_measure;
    j["rho_bar"] = m.rho_bar;
    j["xt_dependent"] = m.xt_dependent;
    j["closure"] = to_string(m.closure);
    j["lipschitz"] = {m.lipschitz_l1, m.lipschitz_l2, m.lipschitz_l3};
    j["interpolation"] = "piecewise-linear";
    return j.dump(2);
}

EffectiveModel effective_model_from_json(const std::string &text) {
    try {
        const json j = json::parse(text);
        EffectiveModel m;
        m.dim = j.at("dimension").get<int>();
        m.a_hat = matrix_from(j.at("A_hat"));
        m.r_grid = vector_from(j.at("r_grid"));
        m.l1 = matrix_from(j.at("L1")).transpose();
        m.l2 = matrix_from(j.at("L2")).transpose();
        m.l3 = vector_from(j.at("L3"));
        m.solid_measure = j.at("solid_measure").get<double>();
        m.rho_bar = j.at("rho_bar").get<double>();
        m.xt_dependent = j.value("xt_dependent", false);
        m.closure = closure_from_string(j.value("closure", std::string("displayed")));
        if (j.contains("lipschitz")) {
            m.lipschitz_l1 = j["lipschitz"][0].get<double>();
            m.lipschitz_l2 = j["lipschitz"][1].get<double>();
            m.lipschitz_l3 = j["lipschitz"][2].get<double>();
        }
        if (m.a_hat.rows() != m.dim || m.a_hat.cols() != m.dim || m.r_grid.size() < 2 ||
            m.l1.cols() != m.r_grid.size() || m.l2.cols() != m.r_grid.size() || m.l3.size() != m.r_grid.size() ||
            m.l1.rows() != m.dim || m.l2.rows() != m.dim)
            throw ConfigError("effective model: inconsistent sizes");
        return m;
    } catch (const json::exception &e) {
        throw ConfigError(std::string("effective model: ") + e.what());
    }
}

void save_effective_model(const EffectiveModel &model, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << to_json(model) << '\n';
}

EffectiveModel load_effective_model(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return effective_model_from_json(ss.str());
}

} // namespace triscale
