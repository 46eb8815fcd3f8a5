#pragma once

#include "triscale/fem.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>
#include <vector>

namespace triscale {

/// Symmetric sparse system. With `mean_weights` set, the matrix is assumed to have
/// the constants as its kernel; the solve then returns the solution with w·u = 0,
/// after removing the incompatible part of the right-hand side along w.
struct SparseSystem {
    SparseMatrix matrix;
    Eigen::VectorXd rhs;
    std::optional<Eigen::VectorXd> mean_weights;
};

struct SolveOptions {
    double tol = 1e-10;          // relative residual
    int max_iterations = 20000;
    Index direct_limit = 20000;  // factorize systems below this many dofs
    bool force_iterative = false;
};

struct SolveReport {
    Eigen::VectorXd x;
    int iterations = 0;
    double relative_residual = 0.0;
    double projected_mass = 0.0; // 1·rhs removed for compatibility (constrained systems)
    bool direct = false;
    std::vector<double> history;
};

/// Reusable SPD solver: factorizes once (small systems) or runs Jacobi-preconditioned
/// conjugate gradients, with the weighted-mean constraint handled by rank-one
/// stabilization σ (ŵ·u)(ŵ·v), σ = mean diagonal, ŵ = w/|w|.
class SpdSolver {
public:
    SpdSolver() = default;
    SpdSolver(SparseMatrix matrix, std::optional<Eigen::VectorXd> mean_weights = std::nullopt,
              SolveOptions options = {});

    SolveReport solve(const Eigen::VectorXd &rhs, const Eigen::VectorXd *guess = nullptr) const;

    const SparseMatrix &matrix() const { return matrix_; }
    bool direct() const { return direct_; }
    Index size() const { return matrix_.rows(); }

    /// A·x including the rank-one stabilization term.
    Eigen::VectorXd apply(const Eigen::VectorXd &x) const;

private:
    SparseMatrix matrix_;
    std::optional<Eigen::VectorXd> weights_;
    Eigen::VectorXd unit_weights_;
    double sigma_ = 0.0;
    SolveOptions options_;
    bool direct_ = false;
    Index pinned_ = -1;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> factor_;
    Eigen::VectorXd inv_diag_;

    Eigen::VectorXd compatible_rhs(const Eigen::VectorXd &rhs, double &removed) const;
    SolveReport solve_direct(const Eigen::VectorXd &rhs) const;
    SolveReport solve_pcg(const Eigen::VectorXd &rhs, const Eigen::VectorXd *guess) const;
};

SolveReport solve_spd(const SparseSystem &system, const SolveOptions &options = {},
                      const Eigen::VectorXd *guess = nullptr);

} // namespace triscale
