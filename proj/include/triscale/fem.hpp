#pragma once

#include "triscale/grid.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace triscale {

using SparseMatrix = Eigen::SparseMatrix<double>;

class CoefficientError : public Error {
public:
    explicit CoefficientError(Index cell)
        : Error("non-SPD coefficient on cell " + std::to_string(cell)), cell_(cell) {}
    Index cell() const { return cell_; }

private:
    Index cell_;
};

/// Symmetric with positive leading principal minors (tolerance 1e-12).
inline bool leading_minors_positive(const Tensor &m) {
    const double tol = 1e-12;
    const Index n = m.rows();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol * (std::abs(m(i, j)) + 1.0)) return false;
    if (m(0, 0) <= tol) return false;
    if (n >= 2 && m.topLeftCorner(2, 2).determinant() <= tol) return false;
    if (n == 3 && m.determinant() <= tol) return false;
    return true;
}

/// Exact integrals of Q1 shape-function products on one cell of the grid.
struct Q1Reference {
    int dim = 2;
    int n = 4; // nodes per cell
    /// stiffness[i][j](a,b) = ∫ ∂_i φ_a ∂_j φ_b
    std::array<std::array<Eigen::MatrixXd, 3>, 3> stiffness;
    /// grad_integral[i](a) = ∫ ∂_i φ_a
    std::array<Eigen::VectorXd, 3> grad_integral;
    /// flux[i](a,b) = ∫ φ_b ∂_i φ_a
    std::array<Eigen::MatrixXd, 3> flux;

    explicit Q1Reference(const StructuredGrid &grid);
};

/// Assembles ∫ M(cell) ∇u·∇v over active cells into a sparsity pattern computed once.
class StiffnessAssembler {
public:
    explicit StiffnessAssembler(GridPtr grid);

    const StructuredGrid &grid() const { return *grid_; }
    const Q1Reference &reference() const { return ref_; }

    /// Pattern matrix with zero values (full symmetric storage).
    SparseMatrix pattern() const { return pattern_; }

    /// coefficient(cell) -> N×N matrix; evaluated on active cells only.
    template <typename CoefFn>
    SparseMatrix assemble(CoefFn &&coefficient) const {
        SparseMatrix k = pattern_;
        assemble_into(k, std::forward<CoefFn>(coefficient));
        return k;
    }

    template <typename CoefFn>
    void assemble_into(SparseMatrix &k, CoefFn &&coefficient) const {
        double *values = k.valuePtr();
        std::fill(values, values + k.nonZeros(), 0.0);
        const int nloc = ref_.n;
        const int dim = grid_->dim();
        Eigen::MatrixXd ke(nloc, nloc);
        for (std::size_t ac = 0; ac < active_cells_.size(); ++ac) {
            const Index cell = active_cells_[ac];
            const Tensor m = coefficient(cell);
            if (check_spd_ && !leading_minors_positive(m))
                throw CoefficientError(cell);
            ke.setZero();
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    if (m(i, j) != 0.0) ke.noalias() += m(i, j) * ref_.stiffness[i][j];
            const Index *slot = &slots_[ac * static_cast<std::size_t>(nloc * nloc)];
            for (int a = 0; a < nloc; ++a)
                for (int b = 0; b < nloc; ++b)
                    if (slot[a * nloc + b] >= 0) values[slot[a * nloc + b]] += ke(a, b);
        }
    }

    /// Per-cell symmetric positive definiteness check during assembly (default on).
    void set_check_spd(bool on) { check_spd_ = on; }

    /// Adds diag(d) to a matrix with this pattern.
    void add_diagonal(SparseMatrix &k, const Eigen::VectorXd &d) const;

    const std::vector<Index> &active_cells() const { return active_cells_; }

private:
    GridPtr grid_;
    Q1Reference ref_;
    SparseMatrix pattern_;
    std::vector<Index> active_cells_;
    std::vector<Index> slots_;
    std::vector<Index> diagonal_slots_;
    bool check_spd_ = true;
};

/// Lumped mass: each active cell gives weight(cell)·|cell|/2^N to each of its dofs.
template <typename WeightFn>
Eigen::VectorXd lumped_mass(const StructuredGrid &grid, WeightFn &&weight) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(grid.num_dofs());
    const double share = grid.cell_volume() / grid.nodes_per_cell();
    for (Index c = 0; c < grid.num_cells(); ++c) {
        if (!grid.cell_active(c)) continue;
        const double w = weight(c) * share;
        auto dofs = grid.cell_dofs(c);
        for (int a = 0; a < grid.nodes_per_cell(); ++a)
            if (dofs[a] >= 0) m(dofs[a]) += w;
    }
    return m;
}

inline Eigen::VectorXd lumped_mass(const StructuredGrid &grid) {
    return lumped_mass(grid, [](Index) { return 1.0; });
}

/// ∫ over active cells of f(x) by the midpoint rule.
template <typename F>
double integrate(const StructuredGrid &grid, F &&f) {
    double sum = 0.0;
    for (Index c = 0; c < grid.num_cells(); ++c)
        if (grid.cell_active(c)) sum += f(grid.cell_center(c));
    return sum * grid.cell_volume();
}

/// ∫ of a nodal field: trapezoidal composite rule (exact for cellwise multilinear data
/// on unmasked periodic grids).
inline double integrate_nodal(const Eigen::VectorXd &lumped, const Eigen::VectorXd &values) {
    return lumped.dot(values);
}

/// ∫ of a product of two nodal fields with the same rule.
inline double integrate_product(const Eigen::VectorXd &lumped, const Eigen::VectorXd &u,
                                const Eigen::VectorXd &v) {
    return (lumped.array() * u.array() * v.array()).sum();
}

/// Load vector b_v = ∫ (F(cell) · ∇φ_v) for a cellwise-constant vector field F.
template <typename VecFn>
Eigen::VectorXd gradient_load(const StiffnessAssembler &asmb, VecFn &&field) {
    const auto &grid = asmb.grid();
    const auto &ref = asmb.reference();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(grid.num_dofs());
    for (Index c : asmb.active_cells()) {
        const Vec f = field(c);
        auto dofs = grid.cell_dofs(c);
        for (int a = 0; a < ref.n; ++a) {
            if (dofs[a] < 0) continue;
            double s = 0.0;
            for (int i = 0; i < grid.dim(); ++i) s += f(i) * ref.grad_integral[i](a);
            b(dofs[a]) += s;
        }
    }
    return b;
}

} // namespace triscale
