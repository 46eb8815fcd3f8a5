#include "triscale/linear_solve.hpp"

#include <cmath>
#include <sstream>

namespace triscale {

SpdSolver::SpdSolver(SparseMatrix matrix, std::optional<Eigen::VectorXd> mean_weights, SolveOptions options)
    : matrix_(std::move(matrix)), weights_(std::move(mean_weights)), options_(options) {
    const Index n = matrix_.rows();
    if (matrix_.cols() != n) throw SolverError("matrix is not square");
    if (weights_ && weights_->size() != n) throw SolverError("mean weights size mismatch");
    Eigen::VectorXd diag = matrix_.diagonal();
    if (weights_) {
        unit_weights_ = *weights_ / weights_->norm();
        sigma_ = diag.mean();
    }
    direct_ = !options_.force_iterative && n <= options_.direct_limit;
    if (direct_) {
        factor_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
        if (weights_) {
            // Pin the dof with the largest weight; the shift to w·u = 0 happens after.
            weights_->maxCoeff(&pinned_);
            SparseMatrix reduced = matrix_;
            reduced.prune([this](Index row, Index col, double) { return row != pinned_ && col != pinned_; });
            reduced.coeffRef(pinned_, pinned_) = 1.0;
            reduced.makeCompressed();
            factor_->compute(reduced);
        } else {
            factor_->compute(matrix_);
        }
        if (factor_->info() != Eigen::Success) throw SolverError("sparse LDLT factorization failed");
    } else {
        if (weights_) diag.array() += sigma_ * unit_weights_.array().square();
        if ((diag.array() <= 0.0).any()) throw SolverError("non-positive diagonal in SPD system");
        inv_diag_ = diag.cwiseInverse();
    }
}

Eigen::VectorXd SpdSolver::apply(const Eigen::VectorXd &x) const {
    Eigen::VectorXd y = matrix_ * x;
    if (weights_) y += sigma_ * unit_weights_.dot(x) * unit_weights_;
    return y;
}

Eigen::VectorXd SpdSolver::compatible_rhs(const Eigen::VectorXd &rhs, double &removed) const {
    removed = 0.0;
    if (!weights_) return rhs;
    removed = rhs.sum();
    return rhs - (removed / weights_->sum()) * (*weights_);
}

SolveReport SpdSolver::solve(const Eigen::VectorXd &rhs, const Eigen::VectorXd *guess) const {
    if (rhs.size() != size()) throw SolverError("rhs size mismatch");
    double removed = 0.0;
    Eigen::VectorXd b = compatible_rhs(rhs, removed);
    SolveReport rep = direct_ ? solve_direct(b) : solve_pcg(b, guess);
    rep.projected_mass = removed;
    return rep;
}

SolveReport SpdSolver::solve_direct(const Eigen::VectorXd &b) const {
    SolveReport rep;
    rep.direct = true;
    Eigen::VectorXd rhs = b;
    if (weights_) rhs(pinned_) = 0.0;
    rep.x = factor_->solve(rhs);
    if (weights_) rep.x.array() -= weights_->dot(rep.x) / weights_->sum();
    const double bn = b.norm();
    // One step of iterative refinement keeps the residual at round-off level.
    Eigen::VectorXd r = b - matrix_ * rep.x;
    if (bn > 0.0 && r.norm() > 1e-14 * bn) {
        if (weights_) r(pinned_) = 0.0;
        Eigen::VectorXd dx = factor_->solve(r);
        if (weights_) dx.array() -= weights_->dot(dx) / weights_->sum();
        rep.x += dx;
        r = b - matrix_ * rep.x;
    }
    rep.relative_residual = bn > 0.0 ? r.norm() / bn : r.norm();
    rep.history.push_back(rep.relative_residual);
    if (!rep.x.allFinite()) throw SolverError("direct solve produced non-finite values");
    return rep;
}

SolveReport SpdSolver::solve_pcg(const Eigen::VectorXd &b, const Eigen::VectorXd *guess) const {
    SolveReport rep;
    const double bn = b.norm();
    rep.x = guess ? *guess : Eigen::VectorXd::Zero(b.size());
    if (bn == 0.0) {
        rep.x.setZero();
        return rep;
    }
    Eigen::VectorXd r = b - apply(rep.x);
    Eigen::VectorXd z = inv_diag_.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    double res = r.norm() / bn;
    rep.history.push_back(res);
    int it = 0;
    while (res > options_.tol && it < options_.max_iterations) {
        const Eigen::VectorXd ap = apply(p);
        const double alpha = rz / p.dot(ap);
        rep.x.noalias() += alpha * p;
        r.noalias() -= alpha * ap;
        z = inv_diag_.cwiseProduct(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
        res = r.norm() / bn;
        ++it;
        rep.history.push_back(res);
    }
    rep.iterations = it;
    rep.relative_residual = res;
    if (res > options_.tol || !rep.x.allFinite()) {
        std::ostringstream msg;
        msg << "conjugate gradients did not converge: relative residual " << res << " after " << it
            << " iterations";
        throw SolverError(msg.str(), rep.history);
    }
    if (weights_) rep.x.array() -= weights_->dot(rep.x) / weights_->sum();
    return rep;
}

SolveReport solve_spd(const SparseSystem &system, const SolveOptions &options, const Eigen::VectorXd *guess) {
    SpdSolver solver(system.matrix, system.mean_weights, options);
    return solver.solve(system.rhs, guess);
}

} // namespace triscale
