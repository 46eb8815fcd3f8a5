#include "triscale/macrosolve.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>

namespace triscale {

Convection convection_from_string(const std::string &s) {
    if (s == "hybrid") return Convection::Hybrid;
    if (s == "upwind") return Convection::Upwind;
    if (s == "central") return Convection::Central;
    throw ConfigError("unknown convection scheme: " + s);
}

namespace {

class MacroOperator {
public:
    MacroOperator(const MacroProblem &p)
        : p_(p), grid_(make_dirichlet_box_grid(p.dim, {p.cells, p.cells, p.cells}, p.lengths)), asmb_(grid_) {
        const Tensor a = p.model.a_hat;
        stiffness_ = asmb_.assemble([&](Index) { return a; });
        mass_ = lumped_mass(*grid_);
        capacity_ = p.model.capacity();
        const auto &g = *grid_;
        const auto &ref = asmb_.reference();
        for (int i = 0; i < p.dim; ++i) {
            std::vector<Eigen::Triplet<double>> trip;
            for (Index c = 0; c < g.num_cells(); ++c) {
                auto dofs = g.cell_dofs(c);
                auto nodes = g.cell_nodes(c);
                for (int a = 0; a < ref.n; ++a) {
                    if (dofs[a] < 0) continue;
                    for (int b = 0; b < ref.n; ++b) trip.emplace_back(dofs[a], nodes[b], ref.flux[i](a, b));
                }
            }
            SparseMatrix d(g.num_dofs(), g.num_nodes());
            d.setFromTriplets(trip.begin(), trip.end());
            flux_.push_back(std::move(d));
        }
        neighbours_.resize(static_cast<std::size_t>(g.num_dofs() * p.dim * 2));
        for (Index d = 0; d < g.num_dofs(); ++d) {
            auto ijk = g.node_ijk(g.dof_node(d));
            for (int i = 0; i < p.dim; ++i)
                for (int s = 0; s < 2; ++s) {
                    auto n = ijk;
                    n[static_cast<std::size_t>(i)] += s ? 1 : -1;
                    neighbours_[static_cast<std::size_t>((d * p.dim + i) * 2 + s)] = g.node_index(n);
                }
        }
        reaction_free_ = p.model.reaction_free();
    }

    const GridPtr &grid() const { return grid_; }
    const Eigen::VectorXd &mass() const { return mass_; }
    const SparseMatrix &stiffness() const { return stiffness_; }

    const SpdSolver &solver(double dt) {
        auto it = solvers_.find(dt);
        if (it == solvers_.end()) {
            SparseMatrix s = stiffness_;
            asmb_.add_diagonal(s, (capacity_ / dt) * mass_);
            it = solvers_.emplace(dt, SpdSolver(std::move(s), std::nullopt, SolveOptions{.tol = 1e-12})).first;
        }
        return it->second;
    }

    /// Explicit part: -div-flux of L₁, -L₂·∇u, -L₃ at u, plus the source at time t.
    Eigen::VectorXd explicit_terms(const Eigen::VectorXd &u, double t, int &clamped) const {
        const auto &g = *grid_;
        const int dim = p_.dim;
        Eigen::VectorXd f = Eigen::VectorXd::Zero(g.num_dofs());
        if (!reaction_free_) {
            Eigen::VectorXd nodal = Eigen::VectorXd::Zero(g.num_nodes());
            for (Index d = 0; d < g.num_dofs(); ++d) nodal(g.dof_node(d)) = u(d);
            std::vector<EffectiveValues> vals(static_cast<std::size_t>(g.num_nodes()));
            Eigen::MatrixXd l1(dim, g.num_nodes());
            for (Index n = 0; n < g.num_nodes(); ++n) {
                vals[static_cast<std::size_t>(n)] = eval_effective(p_.model, nodal(n));
                if (vals[static_cast<std::size_t>(n)].clamped) ++clamped;
                l1.col(n) = vals[static_cast<std::size_t>(n)].l1;
            }
            for (int i = 0; i < dim; ++i) f -= flux_[static_cast<std::size_t>(i)] * l1.row(i).transpose();
            for (Index d = 0; d < g.num_dofs(); ++d) {
                const auto &v = vals[static_cast<std::size_t>(g.dof_node(d))];
                double conv = 0.0;
                for (int i = 0; i < dim; ++i) {
                    const double h = g.spacing(i);
                    const double um = nodal(neighbours_[static_cast<std::size_t>((d * dim + i) * 2)]);
                    const double up = nodal(neighbours_[static_cast<std::size_t>((d * dim + i) * 2 + 1)]);
                    const double vel = v.l2(i);
                    bool upwind = p_.convection == Convection::Upwind;
                    if (p_.convection == Convection::Hybrid)
                        upwind = std::abs(vel) * h > 2.0 * p_.model.a_hat(i, i);
                    double grad;
                    if (!upwind)
                        grad = (up - um) / (2.0 * h);
                    else
                        grad = vel > 0.0 ? (u(d) - um) / h : (up - u(d)) / h;
                    conv += vel * grad;
                }
                f(d) -= mass_(d) * (conv + v.l3);
            }
        }
        if (p_.source)
            for (Index d = 0; d < g.num_dofs(); ++d) f(d) += mass_(d) * p_.source(g.dof_coord(d), t);
        return f;
    }

    bool has_explicit_terms() const { return !reaction_free_ || static_cast<bool>(p_.source); }
    double capacity() const { return capacity_; }

private:
    const MacroProblem &p_;
    GridPtr grid_;
    StiffnessAssembler asmb_;
    SparseMatrix stiffness_;
    Eigen::VectorXd mass_;
    double capacity_ = 1.0;
    std::vector<SparseMatrix> flux_;
    std::vector<Index> neighbours_;
    std::map<double, SpdSolver> solvers_;
    bool reaction_free_ = true;
};

} // namespace

MacroSolution solve_macro(const MacroProblem &p) {
    if (p.lengths.size() != p.dim || p.model.dim != p.dim) throw ConfigError("macro problem dimension mismatch");
    if (!(p.final_time > 0.0) || !(p.dt > 0.0) || p.snapshots < 1 || p.cells < 2)
        throw ConfigError("macro problem: invalid time or grid parameters");
    if (!is_spd(p.model.a_hat)) throw CoefficientError(-1);
    if (!(p.model.capacity() > 0.0)) throw ConfigError("macro problem: non-positive capacity");
    MacroOperator op(p);
    const auto &g = *op.grid();

    MacroSolution sol;
    sol.grid = op.grid();
    Eigen::VectorXd u = p.initial ? sample_nodes(g, p.initial) : Eigen::VectorXd::Zero(g.num_dofs());
    const double interval = p.final_time / p.snapshots;
    const int per = std::max(1, static_cast<int>(std::ceil(interval / p.dt - 1e-9)));
    sol.dt = interval / per;

    StiffnessAssembler plain(op.grid());
    const SparseMatrix lap = plain.assemble([&](Index) { return Tensor(Tensor::Identity(p.dim, p.dim)); });
    auto record = [&](double t) {
        sol.step_times.push_back(t);
        sol.l2_norm.push_back(std::sqrt(integrate_product(op.mass(), u, u)));
        sol.gradient_norm2.push_back(u.dot(lap * u));
    };

    sol.times.push_back(0.0);
    sol.snapshots.push_back(u);
    record(0.0);

    auto advance = [&](const Eigen::VectorXd &u0, double t0, double dt, Eigen::VectorXd &out) {
        const SpdSolver &s = op.solver(dt);
        const Eigen::VectorXd inertia = (op.capacity() / dt) * op.mass().cwiseProduct(u0);
        if (!op.has_explicit_terms()) {
            out = s.solve(inertia).x;
            return true;
        }
        Eigen::VectorXd u1 = s.solve(inertia + op.explicit_terms(u0, t0 + dt, sol.clamped_evaluations), &u0).x;
        out = s.solve(inertia + op.explicit_terms(u1, t0 + dt, sol.clamped_evaluations), &u1).x;
        if (!out.allFinite()) return false;
        const double d1 = (u1 - u0).norm(), d2 = (out - u1).norm();
        return !(d2 > d1 && d2 > 1e-12 * std::max(1.0, out.norm()));
    };

    for (int snap = 1; snap <= p.snapshots; ++snap) {
        for (int k = 0; k < per; ++k) {
            const double t0 = interval * (snap - 1) + sol.dt * k;
            Eigen::VectorXd next;
            bool ok = false;
            for (int level = 0; level <= p.max_halvings && !ok; ++level) {
                const int sub = 1 << level;
                const double h = sol.dt / sub;
                Eigen::VectorXd w = u;
                ok = true;
                for (int s = 0; s < sub && ok; ++s) {
                    Eigen::VectorXd nxt;
                    ok = advance(w, t0 + s * h, h, nxt);
                    w = std::move(nxt);
                }
                if (ok)
                    next = std::move(w);
                else
                    ++sol.rejected;
            }
            if (!ok) throw SolverError("macro Picard iteration diverged after " + std::to_string(p.max_halvings) +
                                       " step halvings at t = " + std::to_string(t0));
            u = std::move(next);
            ++sol.steps;
            record(t0 + sol.dt);
        }
        sol.times.push_back(interval * snap);
        sol.snapshots.push_back(u);
    }
    return sol;
}

Eigen::VectorXd MacroSolution::at_time(double t) const {
    if (t <= times.front()) return snapshots.front();
    if (t >= times.back()) return snapshots.back();
    const std::size_t j = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
    const double w = (t - times[j]) / (times[j + 1] - times[j]);
    return (1.0 - w) * snapshots[j] + w * snapshots[j + 1];
}

double MacroSolution::value(const Vec &x, double t) const { return interpolate(*grid, at_time(t), x); }

EnergyReport energy_report(const MacroSolution &s) {
    EnergyReport r;
    for (double v : s.l2_norm) r.sup_l2 = std::max(r.sup_l2, v);
    for (std::size_t k = 1; k < s.step_times.size(); ++k)
        r.integrated_gradient += (s.step_times[k] - s.step_times[k - 1]) * s.gradient_norm2[k];
    return r;
}

std::function<double(const Vec &, double)> manufactured_source(const EffectiveModel &model, ExactSolution e) {
    return [model, e](const Vec &x, double t) {
        const double u = e.u(x, t);
        const Vec grad = e.grad(x, t);
        const Tensor hess = e.hessian(x, t);
        const EffectiveValues v = eval_effective(model, u);
        const Index n = model.r_grid.size();
        Index j = std::upper_bound(model.r_grid.data(), model.r_grid.data() + n, u) - model.r_grid.data() - 1;
        j = std::clamp<Index>(j, 0, n - 2);
        const Vec slope = (model.l1.col(j + 1) - model.l1.col(j)) / (model.r_grid(j + 1) - model.r_grid(j));
        const double diffusion = (model.a_hat.cwiseProduct(hess)).sum();
        return model.capacity() * e.dt(x, t) - diffusion - slope.dot(grad) + v.l2.dot(grad) + v.l3;
    };
}

double l2_error(const MacroSolution &sol, const std::function<double(const Vec &)> &exact, int snapshot) {
    const std::size_t k = snapshot < 0 ? sol.snapshots.size() - 1 : static_cast<std::size_t>(snapshot);
    const auto &g = *sol.grid;
    const Eigen::VectorXd m = lumped_mass(g);
    const Eigen::VectorXd e = sol.snapshots[k] - sample_nodes(g, exact);
    return std::sqrt(integrate_product(m, e, e));
}

void write_macro_outputs(const MacroSolution &sol, const std::string &directory) {
    std::filesystem::create_directories(directory);
    for (std::size_t k = 0; k < sol.snapshots.size(); ++k) {
        FieldOnGrid f(sol.grid, sol.snapshots[k]);
        write_csv(f, directory + "/u0_" + std::to_string(k) + ".csv", {"u0"});
        write_vtk(f, directory + "/u0_" + std::to_string(k) + ".vtk", "u0");
    }
    std::ofstream out(directory + "/macro_diagnostics.csv");
    out << "t,l2_norm,gradient_norm2\n" << std::setprecision(17);
    for (std::size_t k = 0; k < sol.step_times.size(); ++k)
        out << sol.step_times[k] << ',' << sol.l2_norm[k] << ',' << sol.gradient_norm2[k] << '\n';
}

} // namespace triscale
