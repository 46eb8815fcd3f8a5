#include "triscale/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace triscale {

namespace {

const double kTwoPi = 2.0 * std::acos(-1.0);

int half_index(double s) { return wrap_unit(s) < 0.5 ? 0 : 1; }

} // namespace

std::function<Tensor(const Vec &, double)> constant_matrix(const Tensor &m) {
    return [m](const Vec &, double) { return m; };
}

std::function<Tensor(const Vec &, double)> laminate_matrix(int dim, double a0, double a1, int axis) {
    if (axis < 0 || axis >= dim) throw ConfigError("laminate axis out of range");
    return [=](const Vec &y, double) {
        return Tensor((half_index(y(axis)) == 0 ? a0 : a1) * Tensor::Identity(dim, dim));
    };
}

std::function<Tensor(const Vec &, double)> checkerboard_matrix(int dim, double a0, double a1) {
    return [=](const Vec &y, double) {
        int parity = 0;
        for (int i = 0; i < dim; ++i) parity += half_index(y(i));
        return Tensor((parity % 2 == 0 ? a0 : a1) * Tensor::Identity(dim, dim));
    };
}

std::function<Tensor(const Vec &, double)> trigonometric_matrix(const Tensor &m, double base, double amp_y,
                                                                 double amp_tau) {
    return [=](const Vec &y, double tau) {
        double p = 1.0;
        for (Index i = 0; i < y.size(); ++i) p *= std::cos(kTwoPi * y(i));
        return Tensor((base + amp_y * p + amp_tau * std::sin(kTwoPi * tau)) * m);
    };
}

std::function<double(const Vec &)> constant_density(double value) {
    return [value](const Vec &) { return value; };
}

std::function<double(const Vec &)> trigonometric_density(double base, double amp) {
    return [=](const Vec &y) { return base + amp * std::sin(kTwoPi * y(0)); };
}

EllipticityReport validate_coefficients(const CoefficientData &data, int n, int n_tau) {
    if (!data.A || !data.rho) throw ConfigError("coefficient data incomplete");
    EllipticityReport rep;
    rep.min_eigenvalue = std::numeric_limits<double>::infinity();
    rep.max_eigenvalue = 0.0;
    rep.rho_min = std::numeric_limits<double>::infinity();
    rep.rho_max = 0.0;
    const int dim = data.dim;
    const Index total = static_cast<Index>(std::pow(n, dim));
    const int taus = data.tau_dependent ? n_tau : 1;
    Vec y(dim);
    for (Index c = 0; c < total; ++c) {
        Index rest = c;
        for (int i = 0; i < dim; ++i) {
            y(i) = (static_cast<double>(rest % n) + 0.5) / n;
            rest /= n;
        }
        const double r = data.rho(y);
        if (!std::isfinite(r) || r <= 0.0)
            throw HypothesisError("A1", "density not positive at sample " + std::to_string(c));
        rep.rho_min = std::min(rep.rho_min, r);
        rep.rho_max = std::max(rep.rho_max, r);
        for (int k = 0; k < taus; ++k) {
            const Tensor a = data.A(y, static_cast<double>(k) / taus);
            if (a.rows() != dim || a.cols() != dim) throw ConfigError("coefficient matrix has wrong size");
            if (!a.allFinite()) throw HypothesisError("A1", "non-finite coefficient");
            rep.max_asymmetry = std::max(rep.max_asymmetry, asymmetry(a));
            rep.min_eigenvalue = std::min(rep.min_eigenvalue, min_eigenvalue(a));
            rep.max_eigenvalue = std::max(rep.max_eigenvalue, max_eigenvalue(a));
        }
    }
    if (rep.max_asymmetry > 1e-12) throw HypothesisError("A1", "coefficient matrix not symmetric");
    if (rep.min_eigenvalue <= 0.0) throw HypothesisError("A1", "coefficient matrix not positive definite");
    rep.lambda = std::max({rep.max_eigenvalue, 1.0 / rep.min_eigenvalue, rep.rho_max, 1.0 / rep.rho_min});
    return rep;
}

} // namespace triscale
