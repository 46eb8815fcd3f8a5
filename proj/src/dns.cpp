#include "triscale/dns.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace triscale {

namespace {

int eps_inverse(double eps) {
    if (!(eps > 0.0) || eps > 1.0) throw ConfigError("eps must lie in (0,1]");
    const double k = 1.0 / eps;
    if (std::abs(k - std::round(k)) > 1e-9) throw ConfigError("eps must be 1/k for an integer k");
    return static_cast<int>(std::round(k));
}

/// Uniform snapshot intervals with an integer number of steps each.
struct Schedule {
    double interval;
    int per;
    double dt;
};

Schedule schedule(double final_time, int snapshots, double dt_max) {
    Schedule s;
    s.interval = final_time / snapshots;
    s.per = std::max(1, static_cast<int>(std::ceil(s.interval / dt_max - 1e-9)));
    s.dt = s.interval / s.per;
    return s;
}

/// Grid over the same box whose nodes are all unknowns (used to interpolate
/// nodal data that is nonzero on the boundary).
GridPtr all_node_grid(const StructuredGrid &g) {
    StructuredGrid::Spec s;
    s.dim = g.dim();
    for (int i = 0; i < g.dim(); ++i) s.cells[static_cast<std::size_t>(i)] = g.cells(i);
    s.origin = g.origin();
    s.lengths = g.lengths();
    return std::make_shared<StructuredGrid>(s);
}

/// Nodal gradient of dof data on a Dirichlet box grid: central differences inside,
/// one-sided on the boundary. Returns one all-node array per axis.
std::vector<Eigen::VectorXd> nodal_gradient(const StructuredGrid &g, const Eigen::VectorXd &u) {
    const int dim = g.dim();
    Eigen::VectorXd full = Eigen::VectorXd::Zero(g.num_nodes());
    for (Index d = 0; d < g.num_dofs(); ++d) full(g.dof_node(d)) = u(d);
    std::vector<Eigen::VectorXd> grad(static_cast<std::size_t>(dim), Eigen::VectorXd::Zero(g.num_nodes()));
    for (Index n = 0; n < g.num_nodes(); ++n) {
        const auto ijk = g.node_ijk(n);
        for (int i = 0; i < dim; ++i) {
            const int last = g.nodes(i) - 1;
            auto lo = ijk, hi = ijk;
            const int p = ijk[static_cast<std::size_t>(i)];
            lo[static_cast<std::size_t>(i)] = std::max(0, p - 1);
            hi[static_cast<std::size_t>(i)] = std::min(last, p + 1);
            const double span = (hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]) * g.spacing(i);
            grad[static_cast<std::size_t>(i)](n) = (full(g.node_index(hi)) - full(g.node_index(lo))) / span;
        }
    }
    return grad;
}

/// Field value at (y, τ): Q1 in y on the periodic meso grid, linear in τ.
double meso_value(const MesoField &f, int column, const Vec &y, double tau) {
    const double s = wrap_unit(tau) * f.m_tau;
    const int k = static_cast<int>(std::floor(s));
    const double w = s - k;
    const double a = interpolate(*f.grid, f.at(k).col(column), y);
    if (w == 0.0) return a;
    return (1.0 - w) * a + w * interpolate(*f.grid, f.at(k + 1).col(column), y);
}

double omega_value(const OmegaFamily &om, const Vec &y, double tau, double r) {
    if (om.zero()) return 0.0;
    if (om.separable) return om.f(r) * meso_value(om.field, 0, y, tau);
    const double rc = std::clamp(r, om.r_min, om.r_max);
    const Index last = om.r_lattice.size() - 1;
    const double s = (rc - om.r_min) / (om.r_max - om.r_min) * static_cast<double>(last);
    const Index j = std::min<Index>(last - 1, static_cast<Index>(std::floor(s)));
    const double w = s - static_cast<double>(j);
    return (1.0 - w) * meso_value(om.field, static_cast<int>(j), y, tau) +
           w * meso_value(om.field, static_cast<int>(j + 1), y, tau);
}

void check_alignment(const DnsSolution &dns, const MacroSolution &macro) {
    const auto &dg = *dns.grid, &mg = *macro.grid;
    if (dg.dim() != mg.dim()) throw Error("domain mismatch: dimension");
    for (int i = 0; i < dg.dim(); ++i)
        if (std::abs(dg.lengths()(i) - mg.lengths()(i)) > 1e-12 || std::abs(dg.origin()(i) - mg.origin()(i)) > 1e-12)
            throw Error("domain mismatch: box");
    if (dns.times.size() != macro.times.size()) throw Error("domain mismatch: snapshot count");
    for (std::size_t k = 0; k < dns.times.size(); ++k)
        if (std::abs(dns.times[k] - macro.times[k]) > 1e-12) throw Error("domain mismatch: snapshot times");
}

template <typename Reference>
ErrorReport space_time_error(const DnsSolution &dns, Reference &&reference) {
    const auto &g = *dns.grid;
    const Eigen::VectorXd m = lumped_mass(g);
    std::vector<double> e2, u2;
    for (std::size_t k = 0; k < dns.times.size(); ++k) {
        const Eigen::VectorXd &u = dns.snapshots[k];
        const Eigen::VectorXd ref = reference(k);
        const Eigen::VectorXd d = u - ref;
        e2.push_back(integrate_product(m, d, d));
        u2.push_back(integrate_product(m, u, u));
    }
    ErrorReport r;
    double se = 0.0, su = 0.0;
    for (std::size_t k = 1; k < e2.size(); ++k) {
        const double dt = dns.times[k] - dns.times[k - 1];
        se += 0.5 * dt * (e2[k] + e2[k - 1]);
        su += 0.5 * dt * (u2[k] + u2[k - 1]);
    }
    r.error = std::sqrt(se);
    r.reference = std::sqrt(su);
    return r;
}

} // namespace

double DnsSolution::sup_l2() const {
    double s = 0.0;
    for (double v : l2_norm) s = std::max(s, v);
    return s;
}

double DnsSolution::integrated_gradient() const {
    double s = 0.0;
    for (std::size_t k = 1; k < step_times.size(); ++k) s += (step_times[k] - step_times[k - 1]) * gradient_norm2[k];
    return s;
}

GridPtr build_dns_grid(const DnsProblem &p) {
    const int k = eps_inverse(p.eps);
    if (p.geom.dim != 2) throw ConfigError("the direct simulation is two-dimensional");
    for (const auto *list : {&p.geom.fracture_shapes, &p.geom.pore_shapes})
        for (const auto &s : *list)
            if (s.kind != ShapeKind::Box) throw GeometryError("direct simulation geometries must use boxes only");
    if (p.cells_per_pore < 1) throw ConfigError("cells_per_pore must be positive");
    // Pore faces on multiples of 1/cpp in z; fracture faces on multiples of 1/(cpp k) in y.
    for (const auto &s : p.geom.pore_shapes)
        if (!s.is_grid_exact(p.cells_per_pore)) throw GeometryError("pore shape is not grid-exact for the DNS grid");
    for (const auto &s : p.geom.fracture_shapes)
        if (!s.is_grid_exact(p.cells_per_pore * k)) throw GeometryError("fracture shape is not grid-exact for the DNS grid");
    const long n = static_cast<long>(p.cells_per_pore) * k * k;
    if (static_cast<double>(n + 1) * static_cast<double>(n + 1) > static_cast<double>(p.dof_cap) * 1.0000001 &&
        static_cast<double>(n - 1) * static_cast<double>(n - 1) > static_cast<double>(p.dof_cap))
        throw ConfigError("direct simulation exceeds the dof cap (" + std::to_string((n - 1) * (n - 1)) + " > " +
                          std::to_string(p.dof_cap) + ")");
    StructuredGrid::Spec probe;
    probe.dim = 2;
    probe.cells = {static_cast<int>(n), static_cast<int>(n), 1};
    probe.origin = Vec::Zero(2);
    probe.lengths = Vec::Ones(2);
    StructuredGrid cells(probe);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(cells.num_cells()));
    for (Index c = 0; c < cells.num_cells(); ++c)
        mask[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(perforated_indicator(p.geom, p.eps, cells.cell_center(c)));
    auto grid = make_dirichlet_box_grid(2, {static_cast<int>(n), static_cast<int>(n), 1}, Vec::Ones(2), std::move(mask));
    if (grid->num_dofs() > p.dof_cap) throw ConfigError("direct simulation exceeds the dof cap");
    if (!grid->active_cells_connected()) throw GeometryError("disconnected matrix: perforated domain");
    return grid;
}

DnsSolution solve_dns(const DnsProblem &p) {
    const auto start = std::chrono::steady_clock::now();
    if (!p.data.A || !p.data.rho) throw ConfigError("direct simulation: coefficients missing");
    if (!p.reaction.g) throw ConfigError("direct simulation: reaction missing");
    if (!(p.final_time > 0.0) || p.snapshots < 1 || p.steps_per_period < 1)
        throw ConfigError("direct simulation: invalid time parameters");
    DnsSolution sol;
    sol.eps = p.eps;
    sol.grid = build_dns_grid(p);
    const auto &g = *sol.grid;
    const double eps = p.eps, eps2 = eps * eps;
    const Schedule sch = schedule(p.final_time, p.snapshots, eps2 / p.steps_per_period);
    sol.dt = sch.dt;

    StiffnessAssembler asmb(sol.grid);
    std::vector<Vec> y_cell(static_cast<std::size_t>(g.num_cells()));
    for (Index c : asmb.active_cells()) y_cell[static_cast<std::size_t>(c)] = g.cell_center(c) / eps;
    std::vector<Vec> y_node(static_cast<std::size_t>(g.num_dofs()));
    for (Index d = 0; d < g.num_dofs(); ++d) y_node[static_cast<std::size_t>(d)] = g.dof_coord(d) / eps;

    const Eigen::VectorXd mass = lumped_mass(g);
    const Eigen::VectorXd rho_mass = lumped_mass(g, [&](Index c) { return p.data.rho(y_cell[static_cast<std::size_t>(c)]); });
    const SparseMatrix lap = [&] {
        StiffnessAssembler plain(sol.grid);
        return plain.assemble([](Index) { return Tensor(Tensor::Identity(2, 2)); });
    }();

    SparseMatrix k = asmb.pattern();
    auto assemble_at = [&](double t) {
        const double tau = wrap_unit(t / eps2);
        asmb.assemble_into(k, [&](Index c) { return p.data.A(y_cell[static_cast<std::size_t>(c)], tau); });
    };
    std::map<double, std::shared_ptr<SpdSolver>> frozen; // τ-independent coefficients
    auto step_solver = [&](double t, double dt) {
        if (!p.data.tau_dependent) {
            auto it = frozen.find(dt);
            if (it != frozen.end()) return it->second;
        }
        assemble_at(t);
        SparseMatrix s = k;
        asmb.add_diagonal(s, rho_mass / dt);
        auto solver = std::make_shared<SpdSolver>(std::move(s), std::nullopt,
                                                  SolveOptions{.tol = p.solver_tol, .force_iterative = true});
        if (!p.data.tau_dependent) frozen[dt] = solver;
        return solver;
    };

    const bool reactive = !p.reaction.zero();
    Eigen::VectorXd c_node(g.num_dofs());
    auto reaction_load = [&](const Eigen::VectorXd &u, double tau) {
        Eigen::VectorXd f(g.num_dofs());
        if (p.reaction.separable) {
            for (Index d = 0; d < g.num_dofs(); ++d) f(d) = c_node(d) * p.reaction.f(u(d));
        } else {
            for (Index d = 0; d < g.num_dofs(); ++d) f(d) = p.reaction(y_node[static_cast<std::size_t>(d)], tau, u(d));
        }
        return Eigen::VectorXd(mass.cwiseProduct(f) / eps);
    };

    // One implicit Euler step with Picard iterations on the reaction; false on divergence.
    auto advance = [&](const Eigen::VectorXd &u0, double t1, double dt, Eigen::VectorXd &out) {
        auto solver = step_solver(t1, dt);
        const Eigen::VectorXd inertia = rho_mass.cwiseProduct(u0) / dt;
        if (!reactive) {
            auto rep = solver->solve(inertia, &u0);
            sol.cg_iterations += rep.iterations;
            out = std::move(rep.x);
            return true;
        }
        const double tau = wrap_unit(t1 / eps2);
        if (p.reaction.separable)
            for (Index d = 0; d < g.num_dofs(); ++d) c_node(d) = p.reaction.c(y_node[static_cast<std::size_t>(d)], tau);
        Eigen::VectorXd cur = u0;
        double previous = std::numeric_limits<double>::infinity();
        for (int it = 0; it < p.max_picard; ++it) {
            auto rep = solver->solve(inertia + reaction_load(cur, tau), &cur);
            sol.cg_iterations += rep.iterations;
            ++sol.picard_iterations;
            const double change = (rep.x - cur).norm();
            cur = std::move(rep.x);
            if (!cur.allFinite()) return false;
            if (change <= p.picard_tol * std::max(cur.norm(), 1e-300) || change == 0.0) {
                out = std::move(cur);
                return true;
            }
            if (it >= 2 && change > previous) return false;
            previous = change;
        }
        return false;
    };

    Eigen::VectorXd u = p.initial ? sample_nodes(g, p.initial) : Eigen::VectorXd::Zero(g.num_dofs());
    auto record = [&](double t) {
        sol.step_times.push_back(t);
        sol.l2_norm.push_back(std::sqrt(integrate_product(mass, u, u)));
        sol.gradient_norm2.push_back(u.dot(lap * u));
    };
    sol.times.push_back(0.0);
    sol.snapshots.push_back(u);
    record(0.0);
    for (int snap = 1; snap <= p.snapshots; ++snap) {
        for (int s = 0; s < sch.per; ++s) {
            const double t0 = sch.interval * (snap - 1) + sch.dt * s;
            bool ok = false;
            Eigen::VectorXd next;
            for (int level = 0; level <= p.max_halvings && !ok; ++level) {
                const int sub = 1 << level;
                const double h = sch.dt / sub;
                Eigen::VectorXd w = u;
                ok = true;
                for (int q = 0; q < sub && ok; ++q) {
                    Eigen::VectorXd nxt;
                    ok = advance(w, t0 + (q + 1) * h, h, nxt);
                    w = std::move(nxt);
                }
                if (ok)
                    next = std::move(w);
                else
                    ++sol.rejected;
            }
            if (!ok) throw SolverError("direct simulation Picard iteration diverged at t = " + std::to_string(t0));
            u = std::move(next);
            ++sol.steps;
            record(t0 + sch.dt);
        }
        sol.times.push_back(sch.interval * snap);
        sol.snapshots.push_back(u);
    }
    sol.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

ErrorReport compare_to_macro(const DnsSolution &dns, const MacroSolution &macro) {
    check_alignment(dns, macro);
    const auto &g = *dns.grid;
    return space_time_error(dns, [&](std::size_t k) {
        Eigen::VectorXd ref(g.num_dofs());
        for (Index d = 0; d < g.num_dofs(); ++d) ref(d) = interpolate(*macro.grid, macro.snapshots[k], g.dof_coord(d));
        return ref;
    });
}

ErrorReport corrector_error(const DnsSolution &dns, const MacroSolution &macro, const MesoField &theta,
                            const OmegaFamily &omega) {
    check_alignment(dns, macro);
    const auto &g = *dns.grid;
    const int dim = g.dim();
    const auto full = all_node_grid(*macro.grid);
    const double eps = dns.eps;
    return space_time_error(dns, [&](std::size_t k) {
        const auto grad = nodal_gradient(*macro.grid, macro.snapshots[k]);
        const double tau = wrap_unit(dns.times[k] / (eps * eps));
        Eigen::VectorXd ref(g.num_dofs());
        for (Index d = 0; d < g.num_dofs(); ++d) {
            const Vec x = g.dof_coord(d);
            const Vec y = x / eps;
            const double u0 = interpolate(*macro.grid, macro.snapshots[k], x);
            double u1 = omega_value(omega, y, tau, u0);
            for (int i = 0; i < dim; ++i)
                u1 += meso_value(theta, i, y, tau) * interpolate(*full, grad[static_cast<std::size_t>(i)], x);
            ref(d) = u0 + eps * u1;
        }
        return ref;
    });
}

namespace {

/// ∫_{(0,1)^N} w(p) f(p) with the midpoint rule on n^N cells.
template <typename F>
double cell_midpoint(int dim, int n, F &&f) {
    const Index total = static_cast<Index>(std::pow(n, dim));
    double s = 0.0;
    Vec p(dim);
    for (Index c = 0; c < total; ++c) {
        Index rest = c;
        for (int i = 0; i < dim; ++i) {
            p(i) = (static_cast<double>(rest % n) + 0.5) / n;
            rest /= n;
        }
        s += f(p);
    }
    return s / static_cast<double>(total);
}

/// ∫_{Ω × (0,T)} ψ with composite three-point Gauss rules (64 panels per space axis, 64 in time).
double gauss_box(int dim, double T, const std::function<double(const Vec &, double)> &psi) {
    const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const int panels = 64;
    std::vector<double> pts, wts;
    for (int q = 0; q < panels; ++q)
        for (int i = 0; i < 3; ++i) {
            pts.push_back((q + 0.5 + 0.5 * gx[i]) / panels);
            wts.push_back(0.5 * gw[i] / panels);
        }
    const Index m = static_cast<Index>(pts.size());
    const Index total = static_cast<Index>(std::pow(m, dim));
    double s = 0.0;
    Vec x(dim);
    for (std::size_t it = 0; it < pts.size(); ++it) {
        const double t = T * pts[it];
        double inner = 0.0;
        for (Index c = 0; c < total; ++c) {
            Index rest = c;
            double w = 1.0;
            for (int i = 0; i < dim; ++i) {
                x(i) = pts[static_cast<std::size_t>(rest % m)];
                w *= wts[static_cast<std::size_t>(rest % m)];
                rest /= m;
            }
            inner += w * psi(x, t);
        }
        s += T * wts[it] * inner;
    }
    return s;
}

} // namespace

std::vector<ProbeRow> msconv_probe(const CellGeometry &geom, const std::vector<double> &eps_values,
                                   const std::vector<ProbeFunction> &functions, double T) {
    const int dim = geom.dim;
    std::vector<ProbeRow> rows;
    for (const auto &fn : functions) {
        const double psi_int = gauss_box(dim, T, fn.psi);
        const double c_int = cell_midpoint(1, 4096, [&](const Vec &s) { return fn.c(s(0)); });
        const int fine = dim == 2 ? 1024 : 128;
        const double a_full = cell_midpoint(dim, fine, [&](const Vec &y) { return fn.a(y); });
        const double b_full = cell_midpoint(dim, fine, [&](const Vec &z) { return fn.b(z); });
        const double a_m = cell_midpoint(dim, fine, [&](const Vec &y) { return geom.in_matrix(y) ? fn.a(y) : 0.0; });
        const double b_s = cell_midpoint(dim, fine, [&](const Vec &z) { return geom.in_solid(z) ? fn.b(z) : 0.0; });
        for (double eps : eps_values) {
            const int k = eps_inverse(eps);
            const int n = 8 * k * k;
            const double h = 1.0 / n;
            const int nt = std::max(64, static_cast<int>(std::ceil(8.0 * T / (eps * eps))));
            const double dt = T / nt;
            const Index total = static_cast<Index>(std::pow(n, dim));
            std::vector<Vec> xs;
            std::vector<double> w_plain, w_perf;
            xs.reserve(static_cast<std::size_t>(total));
            Vec x(dim);
            for (Index c = 0; c < total; ++c) {
                Index rest = c;
                for (int i = 0; i < dim; ++i) {
                    x(i) = (static_cast<double>(rest % n) + 0.5) * h;
                    rest /= n;
                }
                const double w = fn.a(x / eps) * fn.b(x / (eps * eps));
                xs.push_back(x);
                w_plain.push_back(w);
                w_perf.push_back(perforated_indicator(geom, eps, x) ? w : 0.0);
            }
            double plain = 0.0, perf = 0.0;
            for (int it = 0; it < nt; ++it) {
                const double t = (it + 0.5) * dt;
                const double ct = fn.c(wrap_unit(t / (eps * eps)));
                double sp = 0.0, sq = 0.0;
                for (std::size_t c = 0; c < xs.size(); ++c) {
                    const double v = fn.psi(xs[c], t);
                    sp += w_plain[c] * v;
                    sq += w_perf[c] * v;
                }
                plain += ct * sp;
                perf += ct * sq;
            }
            const double vol = std::pow(h, dim) * dt;
            rows.push_back({eps, fn.name, false, plain * vol, psi_int * a_full * b_full * c_int});
            rows.push_back({eps, fn.name, true, perf * vol, psi_int * a_m * b_s * c_int});
        }
    }
    return rows;
}

void write_dns_outputs(const DnsSolution &sol, const std::string &directory) {
    std::filesystem::create_directories(directory);
    const std::string tag = "eps_" + std::to_string(static_cast<int>(std::round(1.0 / sol.eps)));
    write_vtk(FieldOnGrid(sol.grid, sol.snapshots.back()), directory + "/dns_" + tag + "_final.vtk", "u_eps");
    std::ofstream out(directory + "/dns_" + tag + "_energy.csv");
    out << "t,l2_norm,gradient_norm2\n" << std::setprecision(17);
    for (std::size_t k = 0; k < sol.step_times.size(); ++k)
        out << sol.step_times[k] << ',' << sol.l2_norm[k] << ',' << sol.gradient_norm2[k] << '\n';
}

} // namespace triscale
