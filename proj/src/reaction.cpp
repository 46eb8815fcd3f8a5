#include "triscale/reaction.hpp"

#include "triscale/fem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace triscale {

namespace {

const double kTwoPi = 2.0 * std::acos(-1.0);

Vec lattice_point(Index c, int n, int dim) {
    Vec y(dim);
    for (int i = 0; i < dim; ++i) {
        y(i) = (static_cast<double>(c % n) + 0.5) / n;
        c /= n;
    }
    return y;
}

} // namespace

std::function<double(const Vec &, double)> fourier_profile(std::vector<FourierMode> modes) {
    return [modes = std::move(modes)](const Vec &y, double tau) {
        double s = 0.0;
        for (const auto &m : modes) {
            double arg = m.phase;
            for (Index i = 0; i < y.size(); ++i) arg += kTwoPi * m.k[static_cast<std::size_t>(i)] * y(i);
            s += m.amplitude * std::cos(arg) * (1.0 + m.tau_amplitude * std::sin(kTwoPi * tau));
        }
        return s;
    };
}

double fourier_bound(const std::vector<FourierMode> &modes) {
    double b = 0.0;
    for (const auto &m : modes) b += std::abs(m.amplitude) * (1.0 + std::abs(m.tau_amplitude));
    return b;
}

ReactionTerm no_reaction(double r_min, double r_max) {
    ReactionTerm t;
    t.g = [](const Vec &, double, double) { return 0.0; };
    t.c = [](const Vec &, double) { return 0.0; };
    t.f = [](double) { return 0.0; };
    t.df = [](double) { return 0.0; };
    t.separable = true;
    t.r_min = r_min;
    t.r_max = r_max;
    t.kind = "none";
    return t;
}

ReactionTerm separable_reaction(std::function<double(const Vec &, double)> c, double c_bound,
                                std::function<double(double)> f, std::function<double(double)> df,
                                double df_bound, double r_min, double r_max, std::string kind) {
    ReactionTerm t;
    t.c = std::move(c);
    t.f = std::move(f);
    t.df = std::move(df);
    t.g = [c = t.c, f = t.f](const Vec &y, double tau, double r) { return c(y, tau) * f(r); };
    t.lipschitz = c_bound * df_bound;
    t.separable = true;
    t.r_min = r_min;
    t.r_max = r_max;
    t.kind = std::move(kind);
    return t;
}

ReactionTerm separable_preset(const std::vector<FourierMode> &modes, const std::string &f_kind, double r_min,
                              double r_max) {
    std::function<double(double)> f, df;
    if (f_kind == "linear") {
        f = [](double r) { return r; };
        df = [](double) { return 1.0; };
    } else if (f_kind == "arctan") {
        f = [](double r) { return std::atan(r); };
        df = [](double r) { return 1.0 / (1.0 + r * r); };
    } else if (f_kind == "tanh") {
        f = [](double r) { return std::tanh(r); };
        df = [](double r) {
            const double t = std::tanh(r);
            return 1.0 - t * t;
        };
    } else if (f_kind == "sin") {
        f = [](double r) { return std::sin(r); };
        df = [](double r) { return std::cos(r); };
    } else {
        throw ConfigError("unknown reaction profile f: " + f_kind);
    }
    return separable_reaction(fourier_profile(modes), fourier_bound(modes), f, df, 1.0, r_min, r_max,
                              "separable-" + f_kind);
}

ReactionTerm general_reaction(std::function<double(const Vec &, double, double)> g, double lipschitz,
                              double r_min, double r_max) {
    ReactionTerm t;
    t.g = std::move(g);
    t.lipschitz = lipschitz;
    t.r_min = r_min;
    t.r_max = r_max;
    t.kind = "general";
    return t;
}

ReactionReport validate_reaction(const ReactionTerm &g, int dim, const ReactionLattice &lat) {
    if (!g.g) throw ConfigError("reaction term has no evaluator");
    if (!(g.r_max > g.r_min)) throw ConfigError("empty reaction state range");
    ReactionReport rep;
    const Index cells = static_cast<Index>(std::pow(lat.n, dim));
    const double delta = 1e-6 * std::max(1.0, g.r_max - g.r_min);
    std::vector<double> rs(static_cast<std::size_t>(lat.n_r));
    for (int j = 0; j < lat.n_r; ++j) rs[static_cast<std::size_t>(j)] = g.r_min + (g.r_max - g.r_min) * j / (lat.n_r - 1);
    for (int k = 0; k < lat.n_tau; ++k) {
        const double tau = static_cast<double>(k) / lat.n_tau;
        std::vector<double> mean(rs.size(), 0.0);
        for (Index c = 0; c < cells; ++c) {
            const Vec y = lattice_point(c, lat.n, dim);
            rep.max_at_zero = std::max(rep.max_at_zero, std::abs(g(y, tau, 0.0)));
            for (std::size_t j = 0; j < rs.size(); ++j) {
                const double r = rs[j];
                mean[j] += g(y, tau, r);
                const double d = (g(y, tau, r + delta) - g(y, tau, r - delta)) / (2.0 * delta);
                rep.max_dr = std::max(rep.max_dr, std::abs(d));
            }
        }
        for (double m : mean) rep.max_mean = std::max(rep.max_mean, std::abs(m) / static_cast<double>(cells));
    }
    if (rep.max_dr > g.lipschitz + lat.tol)
        throw HypothesisError("A2", "max |d_r g| = " + std::to_string(rep.max_dr) + " exceeds C = " +
                                        std::to_string(g.lipschitz));
    if (rep.max_at_zero > lat.tol)
        throw HypothesisError("A3", "max |g(y,tau,0)| = " + std::to_string(rep.max_at_zero));
    if (rep.max_mean > lat.tol)
        throw HypothesisError("A4(i)", "max |int_Y g dy| = " + std::to_string(rep.max_mean));
    return rep;
}

VectorPotential::VectorPotential(ReactionTerm g, int dim, int n_y, int m_tau, int n_r, SolveOptions options)
    : g_(std::move(g)), m_tau_(m_tau) {
    if (m_tau_ < 1) throw ConfigError("need at least one tau sample");
    grid_ = make_periodic_cell_grid(dim, n_y);
    StiffnessAssembler asmb(grid_);
    mass_ = lumped_mass(*grid_);
    solver_ = std::make_shared<SpdSolver>(asmb.assemble([dim](Index) { return Tensor(Tensor::Identity(dim, dim)); }),
                                          mass_, options);
    r_lattice_ = Eigen::VectorXd::LinSpaced(std::max(2, n_r), g_.r_min, g_.r_max);
    const double dr = r_lattice_(1) - r_lattice_(0);

    if (g_.separable) {
        unit_potential_.resize(static_cast<std::size_t>(m_tau_));
        unit_field_.resize(static_cast<std::size_t>(m_tau_));
        double g1_max = 0.0;
        for (int k = 0; k < m_tau_; ++k) {
            const double t = tau(k);
            Eigen::VectorXd src = sample_nodes(*grid_, [&](const Vec &y) { return g_.c(y, t); });
            double res = 0.0;
            unit_potential_[static_cast<std::size_t>(k)] = solve_source(src, &res);
            residual_ = std::max(residual_, res);
            unit_field_[static_cast<std::size_t>(k)] = gradients(unit_potential_[static_cast<std::size_t>(k)]);
            g1_max = std::max(g1_max, unit_field_[static_cast<std::size_t>(k)].colwise().norm().maxCoeff());
        }
        double ratio = 0.0, df_lip = 0.0;
        for (Index j = 0; j < r_lattice_.size(); ++j) {
            const double r = r_lattice_(j);
            if (r != 0.0) ratio = std::max(ratio, std::abs(g_.f(r) / r));
            if (j > 0) df_lip = std::max(df_lip, std::abs(g_.df(r) - g_.df(r_lattice_(j - 1))) / dr);
        }
        c_g_ = g1_max * ratio;
        dr_lipschitz_ = g1_max * df_lip;
        return;
    }

    for (int k = 0; k < m_tau_; ++k) {
        Eigen::MatrixXd prev_dr;
        for (Index j = 0; j < r_lattice_.size(); ++j) {
            const double r = r_lattice_(j), t = tau(k);
            Eigen::VectorXd src = sample_nodes(*grid_, [&](const Vec &y) { return g_(y, t, r); });
            double res = 0.0;
            Eigen::VectorXd pot = solve_source(src, &res);
            residual_ = std::max(residual_, res);
            if (r != 0.0) c_g_ = std::max(c_g_, gradients(pot).colwise().norm().maxCoeff() / std::abs(r));
            Eigen::MatrixXd d = dr_field(k, r);
            if (j > 0) dr_lipschitz_ = std::max(dr_lipschitz_, (d - prev_dr).colwise().norm().maxCoeff() / dr);
            prev_dr = std::move(d);
        }
    }
}

void VectorPotential::check_range(double r) const {
    const double slack = 1e-12 * std::max(1.0, g_.r_max - g_.r_min);
    if (r < g_.r_min - slack || r > g_.r_max + slack)
        throw Error("state value " + std::to_string(r) + " outside the potential range [" +
                    std::to_string(g_.r_min) + ", " + std::to_string(g_.r_max) + "]");
}

Eigen::VectorXd VectorPotential::solve_source(const Eigen::VectorXd &nodal_source, double *residual) const {
    const Eigen::VectorXd b = -mass_.cwiseProduct(nodal_source);
    if (b.cwiseAbs().maxCoeff() == 0.0) {
        if (residual) *residual = 0.0;
        return Eigen::VectorXd::Zero(b.size());
    }
    SolveReport rep = solver_->solve(b);
    if (residual) {
        const Eigen::VectorXd compat = b - (b.sum() / mass_.sum()) * mass_;
        *residual = (solver_->matrix() * rep.x - compat).norm() / b.norm();
    }
    return rep.x;
}

Eigen::MatrixXd VectorPotential::gradients(const Eigen::VectorXd &r) const {
    Eigen::MatrixXd out(grid_->dim(), grid_->num_cells());
    for (Index c = 0; c < grid_->num_cells(); ++c) out.col(c) = cell_center_gradient(*grid_, r, c);
    return out;
}

Eigen::VectorXd VectorPotential::potential(int k, double r) const {
    check_range(r);
    k = ((k % m_tau_) + m_tau_) % m_tau_;
    if (g_.separable) return g_.f(r) * unit_potential_[static_cast<std::size_t>(k)];
    const double t = tau(k);
    return solve_source(sample_nodes(*grid_, [&](const Vec &y) { return g_(y, t, r); }));
}

Eigen::MatrixXd VectorPotential::field(int k, double r) const {
    check_range(r);
    k = ((k % m_tau_) + m_tau_) % m_tau_;
    if (g_.separable) return g_.f(r) * unit_field_[static_cast<std::size_t>(k)];
    return gradients(potential(k, r));
}

Eigen::MatrixXd VectorPotential::dr_field(int k, double r) const {
    check_range(r);
    k = ((k % m_tau_) + m_tau_) % m_tau_;
    if (g_.separable) return g_.df(r) * unit_field_[static_cast<std::size_t>(k)];
    // By linearity the difference quotient of G is the potential of the difference quotient of g.
    const double delta = 1e-4 * (g_.r_max - g_.r_min);
    const double t = tau(k);
    Eigen::VectorXd src = sample_nodes(*grid_, [&](const Vec &y) {
        return (g_(y, t, r + delta) - g_(y, t, r - delta)) / (2.0 * delta);
    });
    return gradients(solve_source(src));
}

void write_potential_csv(const VectorPotential &pot, int k, double r, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    const auto &grid = pot.grid();
    const Eigen::MatrixXd g = pot.field(k, r);
    out << "cell";
    const char *axes[] = {"y1", "y2", "y3"};
    for (int i = 0; i < grid.dim(); ++i) out << ',' << axes[i];
    for (int i = 0; i < grid.dim(); ++i) out << ",G" << (i + 1);
    out << '\n' << std::setprecision(17);
    for (Index c = 0; c < grid.num_cells(); ++c) {
        const Vec y = grid.cell_center(c);
        out << c;
        for (int i = 0; i < grid.dim(); ++i) out << ',' << y(i);
        for (int i = 0; i < grid.dim(); ++i) out << ',' << g(i, c);
        out << '\n';
    }
}

} // namespace triscale
