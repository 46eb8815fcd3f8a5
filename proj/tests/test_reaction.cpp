#include <doctest.h>

#include "triscale/coefficients.hpp"
#include "triscale/reaction.hpp"

#include <cmath>

using namespace triscale;

namespace {

const double kPi = std::acos(-1.0);

ReactionTerm sin_times(std::function<double(double)> f, double c, double r_min, double r_max) {
    return general_reaction([f](const Vec &y, double, double r) { return std::sin(2 * kPi * y(0)) * f(r); }, c, r_min,
                            r_max);
}

std::string failed_hypothesis(const ReactionTerm &g) {
    try {
        validate_reaction(g, 2);
    } catch (const HypothesisError &e) {
        return e.hypothesis();
    }
    return "";
}

} // namespace

TEST_CASE("hypotheses A2-A4 on analytic reaction terms") {
    auto linear = sin_times([](double r) { return r; }, 1.0, -1.0, 1.0);
    auto rep = validate_reaction(linear, 2);
    // cell-centre lattice: max |sin| = cos(π/32) at n = 32
    CHECK(rep.max_dr == doctest::Approx(std::cos(kPi / 32)).epsilon(1e-8));
    CHECK(rep.max_at_zero == 0.0);
    CHECK(rep.max_mean < 1e-12);

    auto mean_r = general_reaction([](const Vec &, double, double r) { return r; }, 1.0, -1.0, 1.0);
    CHECK(failed_hypothesis(mean_r) == "A4(i)");

    auto square = [](double r) { return r * r; };
    CHECK(failed_hypothesis(sin_times(square, 2.0, -1.0, 1.0)).empty());
    CHECK(failed_hypothesis(sin_times(square, 2.0, -100.0, 100.0)) == "A2");

    auto shifted = sin_times([](double r) { return r + 0.5; }, 1.0, -1.0, 1.0);
    CHECK(failed_hypothesis(shifted) == "A3");
}

TEST_CASE("separable presets report their Lipschitz constant") {
    std::vector<FourierMode> modes = {{2.0, {1, 1, 0}, 0.3, 0.5}};
    auto g = separable_preset(modes, "arctan", -2.0, 2.0);
    CHECK(g.lipschitz == doctest::Approx(3.0));
    auto rep = validate_reaction(g, 2);
    CHECK(rep.max_dr <= 3.0);
    CHECK_THROWS_AS(separable_preset(modes, "cubic", -1, 1), ConfigError);
}

TEST_CASE("potential of sin(2 pi y1) r matches the Fourier solution at second order") {
    std::vector<FourierMode> modes = {{1.0, {1, 0, 0}, -kPi / 2, 0.0}}; // sin(2π y1)
    std::vector<double> errors;
    for (int n : {32, 64, 128}) {
        VectorPotential pot(separable_preset(modes, "linear", -1.0, 1.0), 2, n, 1);
        CHECK(pot.laplacian_residual() <= 1e-10);
        const double r = 0.7;
        Eigen::MatrixXd g = pot.field(0, r);
        double err = 0.0;
        for (Index c = 0; c < pot.grid().num_cells(); ++c) {
            const Vec y = pot.grid().cell_center(c);
            err = std::max(err, std::abs(g(0, c) + r * std::cos(2 * kPi * y(0)) / (2 * kPi)));
            CHECK(std::abs(g(1, c)) < 1e-12);
        }
        errors.push_back(err);
        Eigen::VectorXd rr = pot.potential(0, r);
        double perr = 0.0;
        for (Index d = 0; d < pot.grid().num_dofs(); ++d)
            perr = std::max(perr, std::abs(rr(d) + r * std::sin(2 * kPi * pot.grid().dof_coord(d)(0)) / (4 * kPi * kPi)));
        CHECK(perr < 2e-3 / (n * n) * 64);
        CHECK(std::abs(rr.sum()) < 1e-12);
        CHECK(pot.bound_constant() == doctest::Approx(1.0 / (2 * kPi)).epsilon(5.0 / (n * n)));
    }
    for (std::size_t i = 1; i < errors.size(); ++i) CHECK(std::log2(errors[i - 1] / errors[i]) >= 1.9);
}

TEST_CASE("zero reaction gives a zero potential") {
    VectorPotential pot(no_reaction(), 2, 16, 4);
    CHECK(pot.field(2, 0.5).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pot.dr_field(1, -0.5).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pot.bound_constant() == 0.0);
}

TEST_CASE("general and separable constructions agree") {
    std::vector<FourierMode> modes = {{1.0, {1, 0, 0}, 0.0, 0.4}, {0.5, {0, 1, 0}, 0.2, 0.0}};
    auto sep = separable_preset(modes, "tanh", -1.5, 1.5);
    auto gen = general_reaction(sep.g, sep.lipschitz, -1.5, 1.5);
    VectorPotential a(sep, 2, 32, 4, 5), b(gen, 2, 32, 4, 5);
    CHECK(b.laplacian_residual() <= 1e-10);
    for (int k = 0; k < 4; ++k) {
        CHECK((a.field(k, 0.8) - b.field(k, 0.8)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((a.dr_field(k, 0.8) - b.dr_field(k, 0.8)).cwiseAbs().maxCoeff() < 1e-7);
    }
    CHECK(b.bound_constant() == doctest::Approx(a.bound_constant()).epsilon(1e-8));
    CHECK(b.dr_lipschitz() <= a.dr_lipschitz() * 1.01);
    CHECK_THROWS_AS(a.field(0, 2.0), Error);
}

TEST_CASE("A1 validation of coefficient presets") {
    CoefficientData d;
    d.A = laminate_matrix(2, 1.0, 4.0);
    d.rho = trigonometric_density(1.0, 0.5);
    auto rep = validate_coefficients(d);
    CHECK(rep.min_eigenvalue == doctest::Approx(1.0));
    CHECK(rep.max_eigenvalue == doctest::Approx(4.0));
    CHECK(rep.lambda == doctest::Approx(4.0));
    d.A = trigonometric_matrix(Tensor::Identity(2, 2), 1.0, 1.5, 0.0);
    CHECK_THROWS_AS(validate_coefficients(d), HypothesisError);
    Tensor skew(2, 2);
    skew << 1, 0.5, 0, 1;
    d.A = constant_matrix(skew);
    CHECK_THROWS_AS(validate_coefficients(d), HypothesisError);
    Vec y(2);
    y << 0.75, 0.25;
    CHECK(checkerboard_matrix(2, 1.0, 3.0)(y, 0.0)(0, 0) == 3.0);
}
