#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace triscale {

using Index = Eigen::Index;

// Small dense types for N <= 3; fixed max size keeps them off the heap.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class HypothesisError : public Error {
public:
    HypothesisError(std::string hypothesis, const std::string &what)
        : Error(hypothesis + ": " + what), hypothesis_(std::move(hypothesis)) {}
    const std::string &hypothesis() const { return hypothesis_; }

private:
    std::string hypothesis_;
};

class SolverError : public Error {
public:
    SolverError(const std::string &what, std::vector<double> history = {})
        : Error(what), residual_history_(std::move(history)) {}
    const std::vector<double> &residual_history() const { return residual_history_; }

private:
    std::vector<double> residual_history_;
};

/// Largest entry of |M - M^T|.
template <typename Derived>
double asymmetry(const Eigen::MatrixBase<Derived> &m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived> &m) {
    return (0.5 * (m + m.transpose())).eval();
}

/// Smallest eigenvalue of the symmetric part.
template <typename Derived>
double min_eigenvalue(const Eigen::MatrixBase<Derived> &m) {
    using Plain = typename Derived::PlainObject;
    Eigen::SelfAdjointEigenSolver<Plain> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

template <typename Derived>
double max_eigenvalue(const Eigen::MatrixBase<Derived> &m) {
    using Plain = typename Derived::PlainObject;
    Eigen::SelfAdjointEigenSolver<Plain> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

template <typename Derived>
bool is_spd(const Eigen::MatrixBase<Derived> &m, double tol = 1e-12) {
    return asymmetry(m) <= tol * std::max(1.0, m.cwiseAbs().maxCoeff()) && min_eigenvalue(m) > tol;
}

inline Vec unit_vector(int dim, int axis) {
    Vec e = Vec::Zero(dim);
    e(axis) = 1.0;
    return e;
}

/// Fractional part in [0,1).
inline double wrap_unit(double s) {
    double f = s - std::floor(s);
    return f >= 1.0 ? 0.0 : f;
}

} // namespace triscale
