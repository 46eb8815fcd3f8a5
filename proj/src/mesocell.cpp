#include "triscale/mesocell.hpp"

#include "triscale/parallel.hpp"

#include <cmath>
#include <filesystem>

namespace triscale {

const Eigen::MatrixXd &MesoField::at(int k) const {
    return states[static_cast<std::size_t>(((k % m_tau) + m_tau) % m_tau)];
}

Eigen::MatrixXd MesoField::gradient(int k, int component) const {
    const auto &g = *grid;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.dim(), g.num_cells());
    const Eigen::VectorXd u = at(k).col(component);
    for (Index c = 0; c < g.num_cells(); ++c)
        if (g.cell_active(c)) out.col(c) = cell_center_gradient(g, u, c);
    return out;
}

MesoSolver::MesoSolver(const CellGeometry &geom, std::shared_ptr<const PoreTensorTable> table,
                       const std::function<double(const Vec &)> &rho, MesoOptions options)
    : table_(std::move(table)), options_(options) {
    if (!geom.matrix_connected) throw GeometryError("disconnected matrix: fracture-scale Y_m");
    if (table_->m_tau != options_.m_tau) throw ConfigError("pore tensor table and meso solver disagree on M_tau");
    grid_ = make_periodic_cell_grid(geom.dim, geom.n_y(), geom.matrix.inside);
    if (table_->num_cells != grid_->num_cells()) throw ConfigError("pore tensor table grid mismatch");
    asmb_ = std::make_shared<StiffnessAssembler>(grid_);
    mass_ = lumped_mass(*grid_);
    rho_mass_ = lumped_mass(*grid_, [&](Index c) { return rho(grid_->cell_center(c)); });
    zs_ = geom.measure_solid;

    const int m = options_.m_tau;
    slice_of_.assign(static_cast<std::size_t>(m), -1);
    std::vector<int> representative;
    for (int k = 0; k < m; ++k) {
        for (std::size_t s = 0; s < representative.size() && slice_of_[static_cast<std::size_t>(k)] < 0; ++s) {
            const int r = representative[s];
            bool same = true;
            for (Index c : asmb_->active_cells()) {
                const auto a = static_cast<std::size_t>(k * table_->num_cells + c);
                const auto b = static_cast<std::size_t>(r * table_->num_cells + c);
                if (table_->entry[a] != table_->entry[b] || table_->scale[a] != table_->scale[b]) {
                    same = false;
                    break;
                }
            }
            if (same) slice_of_[static_cast<std::size_t>(k)] = static_cast<int>(s);
        }
        if (slice_of_[static_cast<std::size_t>(k)] < 0) {
            slice_of_[static_cast<std::size_t>(k)] = static_cast<int>(representative.size());
            representative.push_back(k);
            slices_.push_back(asmb_->assemble([&](Index c) { return table_->a_tilde(k, c); }));
        }
    }
    mean_stiffness_ = asmb_->pattern();
    for (int k = 0; k < m; ++k) mean_stiffness_ += slices_[static_cast<std::size_t>(slice_of_[static_cast<std::size_t>(k)])];
    mean_stiffness_ *= 1.0 / (m * zs_);

    const double dofs = static_cast<double>(grid_->num_dofs());
    if (grid_->num_dofs() <= options_.solve.direct_limit && slices_.size() * dofs <= options_.factor_budget) {
        const double inv_dt = m;
        for (const auto &k : slices_) {
            SparseMatrix s = k / zs_;
            asmb_->add_diagonal(s, inv_dt * rho_mass_);
            step_solvers_.push_back(std::make_shared<SpdSolver>(std::move(s), std::nullopt, options_.solve));
        }
    }
}

const SparseMatrix &MesoSolver::stiffness(int k) const {
    const int m = options_.m_tau;
    return slices_[static_cast<std::size_t>(slice_of_[static_cast<std::size_t>(((k % m) + m) % m)])];
}

std::shared_ptr<SpdSolver> MesoSolver::step_solver(int k) const {
    const int m = options_.m_tau;
    const int s = slice_of_[static_cast<std::size_t>(((k % m) + m) % m)];
    if (!step_solvers_.empty()) return step_solvers_[static_cast<std::size_t>(s)];
    SparseMatrix mat = slices_[static_cast<std::size_t>(s)] / zs_;
    asmb_->add_diagonal(mat, static_cast<double>(m) * rho_mass_);
    SolveOptions opt = options_.solve;
    opt.force_iterative = true;
    return std::make_shared<SpdSolver>(std::move(mat), std::nullopt, opt);
}

MesoField MesoSolver::march(const std::function<Eigen::MatrixXd(int k)> &load_fn, int columns) const {
    const int m = options_.m_tau;
    const double inv_dt = m;
    const Index n = grid_->num_dofs();
    const double rho_total = rho_mass_.sum();

    MesoField out;
    out.grid = grid_;
    out.m_tau = m;
    out.components = columns;
    out.states.assign(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(n, columns));

    Eigen::VectorXd integrated = Eigen::VectorXd::Zero(columns);
    auto load = [&](int k, bool record) {
        Eigen::MatrixXd f = load_fn(k);
        for (int c = 0; c < columns; ++c) {
            const double s = f.col(c).sum();
            if (record) {
                out.projected_mass = std::max(out.projected_mass, std::abs(s));
                integrated(c) += s / m;
            }
            f.col(c) -= (s / rho_total) * rho_mass_;
        }
        return f;
    };
    auto normalize = [&](Eigen::MatrixXd &u) {
        for (int c = 0; c < columns; ++c) u.col(c).array() -= rho_mass_.dot(u.col(c)) / rho_total;
    };

    std::vector<Eigen::MatrixXd> loads(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) loads[static_cast<std::size_t>(k)] = load(k, true);
    out.source_mass = integrated.cwiseAbs().maxCoeff();

    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, columns);
    if (options_.steady_start) {
        SpdSolver steady(mean_stiffness_, rho_mass_, options_.solve);
        Eigen::MatrixXd fbar = Eigen::MatrixXd::Zero(n, columns);
        for (const auto &f : loads) fbar += f / m;
        for (int c = 0; c < columns; ++c) u.col(c) = steady.solve(fbar.col(c)).x;
        normalize(u);
    }

    double previous = 0.0;
    for (int period = 1;; ++period) {
        const Eigen::MatrixXd start = u;
        for (int k = 0; k < m; ++k) {
            const int j = (k + 1) % m;
            auto solver = step_solver(j);
            const Eigen::MatrixXd rhs = inv_dt * (rho_mass_.asDiagonal() * u) + loads[static_cast<std::size_t>(j)];
            Eigen::MatrixXd next(n, columns);
            parallel_for(columns, options_.workers, [&](long c) {
                const Eigen::VectorXd guess = u.col(c);
                next.col(c) = solver->solve(rhs.col(c), &guess).x;
            });
            normalize(next);
            u = std::move(next);
            out.states[static_cast<std::size_t>(j)] = u;
        }
        const Eigen::MatrixXd d = u - start;
        double defect = 0.0;
        for (int c = 0; c < columns; ++c) defect += integrate_product(mass_, d.col(c), d.col(c));
        defect = std::sqrt(defect);
        out.defect_history.push_back(defect);
        out.contraction = previous > 0.0 ? defect / previous : 0.0;
        previous = defect;
        out.defect = defect;
        out.periods = period;
        if (defect <= options_.tol_period) break;
        if (period >= options_.max_periods)
            throw SolverError("meso period iteration did not converge in " + std::to_string(period) +
                                  " periods (contraction " + std::to_string(out.contraction) + ")",
                              out.defect_history);
    }

    const Eigen::VectorXd unit_rho = rho_mass_ / rho_mass_.norm();
    for (int j = 0; j < m; ++j) {
        const auto &cur = out.at(j), &prev = out.at(j - 1);
        const SparseMatrix &k = stiffness(j);
        for (int c = 0; c < columns; ++c) {
            const Eigen::VectorXd inertia = inv_dt * rho_mass_.cwiseProduct(prev.col(c));
            const Eigen::VectorXd &f = loads[static_cast<std::size_t>(j)].col(c);
            Eigen::VectorXd r = inv_dt * rho_mass_.cwiseProduct(cur.col(c)) + (k * cur.col(c)) / zs_ - inertia - f;
            r -= unit_rho.dot(r) * unit_rho;
            const double scale = f.norm() + inertia.norm();
            if (scale > 0.0) out.weak_residual = std::max(out.weak_residual, r.norm() / scale);
            out.max_weighted_mean = std::max(out.max_weighted_mean, std::abs(rho_mass_.dot(cur.col(c))));
        }
    }
    return out;
}

MesoField MesoSolver::solve_theta() const {
    const int dim = grid_->dim();
    return march(
        [&](int k) {
            Eigen::MatrixXd f(grid_->num_dofs(), dim);
            for (int i = 0; i < dim; ++i)
                f.col(i) = -gradient_load(*asmb_, [&](Index c) { return Vec(table_->a_tilde(k, c).col(i)); }) / zs_;
            return f;
        },
        dim);
}

MesoField MesoSolver::solve_source(const std::function<Eigen::MatrixXd(int k)> &nodal_source, int columns) const {
    return march([&](int k) { return Eigen::MatrixXd(mass_.asDiagonal() * nodal_source(k)); }, columns);
}

Eigen::VectorXd OmegaFamily::at(int k, double r) const {
    if (zero()) return Eigen::VectorXd::Zero(field.grid->num_dofs());
    if (separable) return f(r) * field.at(k).col(0);
    if (r < r_min || r > r_max) throw Error("state value outside the omega table");
    const Index last = r_lattice.size() - 1;
    const double s = (r - r_min) / (r_max - r_min) * static_cast<double>(last);
    const Index j = std::min<Index>(last - 1, static_cast<Index>(std::floor(s)));
    const double w = s - static_cast<double>(j);
    return (1.0 - w) * field.at(k).col(j) + w * field.at(k).col(j + 1);
}

Eigen::MatrixXd OmegaFamily::gradient(int k, double r) const {
    const auto &g = *field.grid;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.dim(), g.num_cells());
    if (zero()) return out;
    const Eigen::VectorXd u = at(k, r);
    for (Index c = 0; c < g.num_cells(); ++c)
        if (g.cell_active(c)) out.col(c) = cell_center_gradient(g, u, c);
    return out;
}

OmegaFamily solve_omega(const MesoSolver &meso, const ReactionTerm &g, int n_r) {
    OmegaFamily fam;
    fam.separable = g.separable;
    fam.f = g.f;
    fam.r_min = g.r_min;
    fam.r_max = g.r_max;
    fam.r_lattice = Eigen::VectorXd::LinSpaced(std::max(2, n_r), g.r_min, g.r_max);
    const auto &grid = *meso.grid();
    const int m = meso.options().m_tau;
    if (g.zero()) {
        fam.field.grid = meso.grid();
        fam.field.m_tau = m;
        return fam;
    }
    if (g.separable) {
        fam.field = meso.solve_source(
            [&](int k) {
                const double tau = static_cast<double>(k) / m;
                return Eigen::MatrixXd(sample_nodes(grid, [&](const Vec &y) { return g.c(y, tau); }));
            },
            1);
        return fam;
    }
    const int cols = static_cast<int>(fam.r_lattice.size());
    fam.field = meso.solve_source(
        [&](int k) {
            const double tau = static_cast<double>(k) / m;
            Eigen::MatrixXd s(grid.num_dofs(), cols);
            for (int j = 0; j < cols; ++j)
                s.col(j) = sample_nodes(grid, [&](const Vec &y) { return g(y, tau, fam.r_lattice(j)); });
            return s;
        },
        cols);
    return fam;
}

std::pair<double, double> discrete_duality_check(const std::vector<Eigen::VectorXd> &u,
                                                 const std::vector<Eigen::VectorXd> &v,
                                                 const Eigen::VectorXd &weighted_mass) {
    const int m = static_cast<int>(u.size());
    if (m < 3 || v.size() != u.size()) throw Error("duality check needs matching periodic series");
    auto at = [m](const std::vector<Eigen::VectorXd> &s, int k) -> const Eigen::VectorXd & {
        return s[static_cast<std::size_t>(((k % m) + m) % m)];
    };
    double uv = 0.0, vu = 0.0;
    // dτ = 1/m: (a_{k+1} - a_{k-1}) / (2 dτ) weighted by dτ.
    for (int k = 0; k < m; ++k) {
        uv += 0.5 * integrate_product(weighted_mass, at(u, k + 1) - at(u, k - 1), at(v, k));
        vu += 0.5 * integrate_product(weighted_mass, at(v, k + 1) - at(v, k - 1), at(u, k));
    }
    return {uv, vu};
}

std::pair<double, double> theta_energy(const MesoSolver &meso, const MesoField &theta, int i) {
    const int m = theta.m_tau;
    StiffnessAssembler asmb(meso.grid());
    double energy = 0.0, source = 0.0;
    for (int k = 0; k < m; ++k) {
        const Eigen::VectorXd t = theta.at(k).col(i);
        energy += t.dot(meso.stiffness(k) * t) / m;
        const Eigen::VectorXd b =
            gradient_load(asmb, [&](Index c) { return Vec(meso.table().a_tilde(k, c).col(i)); });
        source -= b.dot(t) / m;
    }
    return {energy, source};
}

void write_vtk_series(const MesoField &field, int component, const std::string &prefix) {
    const auto parent = std::filesystem::path(prefix).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    for (int k = 0; k < field.m_tau; ++k)
        write_vtk(FieldOnGrid(field.grid, field.at(k).col(component)), prefix + "_" + std::to_string(k) + ".vtk",
                  "u");
}

} // namespace triscale
