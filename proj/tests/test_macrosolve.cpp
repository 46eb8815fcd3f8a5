#include <doctest.h>

#include "triscale/macrosolve.hpp"

#include <cmath>

using namespace triscale;

namespace {

const double kPi = std::acos(-1.0);

EffectiveModel trivial_model(double rho_bar = 1.0) {
    EffectiveModel m;
    m.a_hat = Tensor::Identity(2, 2);
    m.r_grid = Eigen::VectorXd::LinSpaced(3, -2.0, 2.0);
    m.l1 = Eigen::MatrixXd::Zero(2, 3);
    m.l2 = Eigen::MatrixXd::Zero(2, 3);
    m.l3 = Eigen::VectorXd::Zero(3);
    m.rho_bar = rho_bar;
    return m;
}

/// L₁ = (0.6 r, -0.4 r), L₂ = (0.8 + 0.5 r, -0.3 r), L₃ = 1.5 r: linear, hence exact in the tables.
EffectiveModel reactive_model() {
    EffectiveModel m = trivial_model(1.3);
    m.a_hat << 1.2, 0.2, 0.2, 0.8;
    m.solid_measure = 0.9;
    for (Index j = 0; j < 3; ++j) {
        const double r = m.r_grid(j);
        m.l1.col(j) << 0.6 * r, -0.4 * r;
        m.l2.col(j) << 0.8 + 0.5 * r, -0.3 * r;
        m.l3(j) = 1.5 * r;
    }
    return m;
}

Vec unit_box() { return Vec::Ones(2); }

double sin_sin(const Vec &x) { return std::sin(kPi * x(0)) * std::sin(kPi * x(1)); }

MacroProblem manufactured(int cells, double dt, double T, std::function<double(double)> a,
                          std::function<double(double)> da) {
    MacroProblem p;
    p.lengths = unit_box();
    p.cells = cells;
    p.final_time = T;
    p.dt = dt;
    p.snapshots = 1;
    p.model = reactive_model();
    ExactSolution e;
    e.u = [a](const Vec &x, double t) { return a(t) * sin_sin(x); };
    e.dt = [da](const Vec &x, double t) { return da(t) * sin_sin(x); };
    e.grad = [a](const Vec &x, double t) {
        Vec g(2);
        g << kPi * std::cos(kPi * x(0)) * std::sin(kPi * x(1)), kPi * std::sin(kPi * x(0)) * std::cos(kPi * x(1));
        return Vec(a(t) * g);
    };
    e.hessian = [a](const Vec &x, double t) {
        Tensor h(2, 2);
        const double s0 = std::sin(kPi * x(0)), s1 = std::sin(kPi * x(1));
        const double c0 = std::cos(kPi * x(0)), c1 = std::cos(kPi * x(1));
        h << -kPi * kPi * s0 * s1, kPi * kPi * c0 * c1, kPi * kPi * c0 * c1, -kPi * kPi * s0 * s1;
        return Tensor(a(t) * h);
    };
    p.source = manufactured_source(p.model, e);
    p.initial = [a](const Vec &x) { return a(0.0) * sin_sin(x); };
    return p;
}

} // namespace

TEST_CASE("separable heat solution") {
    std::vector<double> err;
    for (int n : {16, 32}) {
        MacroProblem p;
        p.lengths = unit_box();
        p.cells = n;
        p.final_time = 0.05;
        p.dt = 1e-4;
        p.snapshots = 5;
        p.initial = sin_sin;
        p.model = trivial_model(2.0);
        auto sol = solve_macro(p);
        CHECK(sol.times.size() == 6);
        CHECK(sol.snapshots.back().allFinite());
        const double decay = std::exp(-2 * kPi * kPi * p.final_time / 2.0);
        err.push_back(l2_error(sol, [&](const Vec &x) { return decay * sin_sin(x); }));
        // Dissipative: the discrete L² norm never grows without L terms.
        for (std::size_t k = 1; k < sol.l2_norm.size(); ++k) CHECK(sol.l2_norm[k] <= sol.l2_norm[k - 1]);
        auto rep = energy_report(sol);
        CHECK(rep.sup_l2 == doctest::Approx(0.5).epsilon(1e-2));
        CHECK(rep.integrated_gradient > 0.0);
    }
    CHECK(err[1] < err[0]);
    CHECK(err[1] < 5e-3);
}

TEST_CASE("manufactured solution: second order in space with all L terms") {
    std::vector<double> err;
    for (int n : {16, 32, 64}) {
        // Linear in t, so implicit Euler adds no time error.
        auto p = manufactured(n, 0.01, 0.1, [](double t) { return 0.5 * (1.0 + t); }, [](double) { return 0.5; });
        auto sol = solve_macro(p);
        CHECK(sol.rejected == 0);
        err.push_back(l2_error(sol, [](const Vec &x) { return 0.55 * sin_sin(x); }));
    }
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) >= 1.9);
}

TEST_CASE("manufactured solution: first order in time") {
    std::vector<double> err;
    auto a = [](double t) { return 0.5 * std::cos(3.0 * t); };
    auto da = [](double t) { return -1.5 * std::sin(3.0 * t); };
    for (double dt : {0.04, 0.02, 0.01}) {
        auto sol = solve_macro(manufactured(48, dt, 0.4, a, da));
        err.push_back(l2_error(sol, [&](const Vec &x) { return a(0.4) * sin_sin(x); }));
    }
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) >= 0.9);
}

TEST_CASE("constant L3 forcing matches a refined reference") {
    auto model = trivial_model();
    model.l3.setConstant(1.0);
    auto run = [&](int n, double dt) {
        MacroProblem p;
        p.lengths = unit_box();
        p.cells = n;
        p.final_time = 0.05;
        p.dt = dt;
        p.snapshots = 1;
        p.model = model;
        return solve_macro(p);
    };
    auto coarse = run(16, 2e-3), mid = run(32, 1e-3), fine = run(64, 5e-4);
    auto diff = [&](const MacroSolution &a) {
        double e = 0.0;
        const Eigen::VectorXd m = lumped_mass(*a.grid);
        for (Index d = 0; d < a.grid->num_dofs(); ++d) {
            const double v = a.snapshots.back()(d) - fine.value(a.grid->dof_coord(d), 0.05);
            e += m(d) * v * v;
        }
        return std::sqrt(e);
    };
    CHECK(coarse.snapshots.back().maxCoeff() < 0.0); // -L₃ drains
    CHECK(diff(mid) < diff(coarse));
}

TEST_CASE("invalid problems are rejected") {
    MacroProblem p;
    p.lengths = unit_box();
    p.model = trivial_model();
    p.model.a_hat(0, 0) = -1.0;
    CHECK_THROWS_AS(solve_macro(p), CoefficientError);
    p.model = trivial_model();
    p.final_time = -1.0;
    CHECK_THROWS_AS(solve_macro(p), ConfigError);
}
