#include <doctest.h>

#include "triscale/mesocell.hpp"

#include <cmath>
#include <random>

using namespace triscale;

namespace {

const double kPi = std::acos(-1.0);

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

struct Setup {
    CellGeometry geom;
    CoefficientData data;
    std::shared_ptr<PoreTensorTable> table;
};

Setup fractured(int n_y, int m_tau, bool tau_dependent) {
    Setup s;
    s.geom = build_cell_geometry({ShapeSpec::box(v2(0.5, 0.5), v2(0.125, 0.125))},
                                 {ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25))}, n_y, 16, 2);
    s.data.A = tau_dependent ? trigonometric_matrix(Tensor::Identity(2, 2), 1.0, 0.5, 0.25)
                             : checkerboard_matrix(2, 1.0, 3.0);
    s.data.tau_dependent = tau_dependent;
    s.data.rho = trigonometric_density(1.0, 0.3);
    s.table = std::make_shared<PoreTensorTable>(tabulate_pore_tensors(s.data, s.geom, m_tau));
    return s;
}

} // namespace

TEST_CASE("full cell with constant coefficients has a zero theta") {
    auto geom = build_cell_geometry({}, {}, 16, 16, 2, {.allow_unperforated = true});
    CoefficientData d;
    Tensor m(2, 2);
    m << 2.0, 0.5, 0.5, 1.0;
    d.A = constant_matrix(m);
    d.rho = constant_density(2.0);
    auto table = std::make_shared<PoreTensorTable>(tabulate_pore_tensors(d, geom, 8));
    MesoSolver meso(geom, table, d.rho, {.m_tau = 8});
    auto theta = meso.solve_theta();
    for (int k = 0; k < 8; ++k) CHECK(theta.at(k).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("tau-independent data give a stationary theta after one period") {
    auto s = fractured(32, 16, false);
    MesoSolver meso(s.geom, s.table, s.data.rho, {.m_tau = 16});
    CHECK(meso.distinct_slices() == 1);
    auto theta = meso.solve_theta();
    CHECK(theta.periods == 1);
    CHECK(theta.defect <= 1e-10);
    CHECK(theta.at(0).cwiseAbs().maxCoeff() > 1e-3);
    for (int k = 1; k < 16; ++k) CHECK((theta.at(k) - theta.at(0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("time-periodic theta: residual, periodicity, weighted mean, energy identity, uniqueness") {
    auto s = fractured(32, 16, true);
    MesoOptions opt{.m_tau = 16};
    MesoSolver meso(s.geom, s.table, s.data.rho, opt);
    CHECK(meso.distinct_slices() > 1);
    auto theta = meso.solve_theta();
    CHECK(theta.defect <= 1e-8);
    CHECK(theta.weak_residual <= 1e-8);
    CHECK(theta.max_weighted_mean <= 1e-12);
    CHECK(theta.projected_mass < 1e-12);
    double spread = 0.0;
    for (int k = 1; k < 16; ++k) spread = std::max(spread, (theta.at(k) - theta.at(0)).cwiseAbs().maxCoeff());
    CHECK(spread > 1e-4);
    for (int i = 0; i < 2; ++i) {
        auto [energy, source] = theta_energy(meso, theta, i);
        CHECK(energy > 0.0);
        CHECK(std::abs(energy - source) <= 0.01 * energy);
    }
    opt.steady_start = false;
    auto cold = MesoSolver(s.geom, s.table, s.data.rho, opt).solve_theta();
    CHECK(cold.periods >= theta.periods);
    double diff = 0.0;
    for (int k = 0; k < 16; ++k) diff = std::max(diff, (cold.at(k) - theta.at(k)).cwiseAbs().maxCoeff());
    CHECK(diff <= 10 * opt.tol_period);
}

TEST_CASE("omega: zero data, linearity in f, general tabulation") {
    auto s = fractured(16, 8, true);
    MesoSolver meso(s.geom, s.table, s.data.rho, {.m_tau = 8});
    auto none = solve_omega(meso, no_reaction());
    CHECK(none.at(3, 0.5).cwiseAbs().maxCoeff() == 0.0);

    std::vector<FourierMode> modes = {{1.0, {1, 1, 0}, 0.0, 0.5}};
    auto sep = separable_preset(modes, "arctan", -1.0, 1.0);
    auto fam = solve_omega(meso, sep, 5);
    CHECK(fam.field.weak_residual <= 1e-8);
    CHECK(fam.field.max_weighted_mean <= 1e-12);
    CHECK(fam.at(2, 0.0).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fam.at(2, 0.5) - std::atan(0.5) * fam.at(2, 1.0) / std::atan(1.0)).cwiseAbs().maxCoeff() < 1e-13);

    auto gen = solve_omega(meso, general_reaction(sep.g, sep.lipschitz, -1.0, 1.0), 5);
    for (int k = 0; k < 8; ++k) {
        CHECK((gen.at(k, 0.5) - fam.at(k, 0.5)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(gen.at(k, 0.0).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("omega source mass over Y_m is projected and reported") {
    auto s = fractured(16, 8, false);
    MesoSolver meso(s.geom, s.table, s.data.rho, {.m_tau = 8});
    // cos(2π y1) has zero mean over Y but not over Y_m with a centered square hole.
    auto g = separable_preset({{1.0, {1, 0, 0}, 0.0, 0.0}}, "linear", -1.0, 1.0);
    auto fam = solve_omega(meso, g);
    CHECK(fam.field.projected_mass > 1e-3);
    CHECK(fam.field.source_mass > 1e-3);
    CHECK(fam.field.weak_residual <= 1e-8);
}

TEST_CASE("discrete duality antisymmetry") {
    auto grid = make_periodic_cell_grid(2, 8);
    Eigen::VectorXd w = lumped_mass(*grid, [&](Index c) { return 1.0 + 0.5 * grid->cell_center(c)(0); });
    Eigen::VectorXd phi = sample_nodes(*grid, [](const Vec &y) { return std::sin(2 * kPi * y(0)) + y(1); });
    const int m = 16;
    std::vector<Eigen::VectorXd> u, v;
    for (int k = 0; k < m; ++k) {
        u.push_back(std::sin(2 * kPi * k / m) * phi);
        v.push_back(std::cos(2 * kPi * k / m) * phi);
    }
    auto [a, b] = discrete_duality_check(u, u, w);
    CHECK(std::abs(a) < 1e-12);
    CHECK(std::abs(b) < 1e-12);
    auto [c, d] = discrete_duality_check(u, v, w);
    CHECK(std::abs(c) > 0.1);
    CHECK(std::abs(c + d) < 1e-12);

    std::mt19937 rng(11);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Eigen::VectorXd> p, q;
        for (int k = 0; k < m; ++k) {
            p.push_back(Eigen::VectorXd::NullaryExpr(grid->num_dofs(), [&] { return n01(rng); }));
            q.push_back(Eigen::VectorXd::NullaryExpr(grid->num_dofs(), [&] { return n01(rng); }));
        }
        auto [x, y] = discrete_duality_check(p, q, w);
        CHECK(std::abs(x + y) <= 1e-10);
    }
}
