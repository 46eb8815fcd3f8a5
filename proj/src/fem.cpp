#include "triscale/fem.hpp"

#include <algorithm>
#include <cmath>

namespace triscale {

namespace {

// Q1 shape function value and derivative on [0,1]^N (per-axis factors).
double shape(int loc, const Vec &xi, int dim) {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= (loc & (1 << a)) ? xi(a) : 1.0 - xi(a);
    return v;
}

double shape_deriv(int loc, const Vec &xi, int dim, int axis) {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) {
        const bool up = loc & (1 << a);
        if (a == axis) v *= up ? 1.0 : -1.0;
        else v *= up ? xi(a) : 1.0 - xi(a);
    }
    return v;
}

} // namespace

Q1Reference::Q1Reference(const StructuredGrid &grid) : dim(grid.dim()), n(grid.nodes_per_cell()) {
    const double g = 0.5 / std::sqrt(3.0);
    const double pts[2] = {0.5 - g, 0.5 + g};
    const Vec h = grid.spacing();
    const double vol = h.prod();
    for (int i = 0; i < 3; ++i) {
        grad_integral[i] = Eigen::VectorXd::Zero(n);
        flux[i] = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j < 3; ++j) stiffness[i][j] = Eigen::MatrixXd::Zero(n, n);
    }
    const int nq = 1 << dim;
    const double w = vol / nq;
    for (int q = 0; q < nq; ++q) {
        Vec xi(dim);
        for (int a = 0; a < dim; ++a) xi(a) = pts[(q >> a) & 1];
        for (int a = 0; a < n; ++a) {
            for (int i = 0; i < dim; ++i) {
                const double dai = shape_deriv(a, xi, dim, i) / h(i);
                grad_integral[i](a) += w * dai;
                for (int b = 0; b < n; ++b) {
                    flux[i](a, b) += w * dai * shape(b, xi, dim);
                    for (int j = 0; j < dim; ++j)
                        stiffness[i][j](a, b) += w * dai * shape_deriv(b, xi, dim, j) / h(j);
                }
            }
        }
    }
}

StiffnessAssembler::StiffnessAssembler(GridPtr grid) : grid_(std::move(grid)), ref_(*grid_) {
    const auto &g = *grid_;
    const int nloc = ref_.n;
    std::vector<Eigen::Triplet<double>> trips;
    for (Index c = 0; c < g.num_cells(); ++c) {
        if (!g.cell_active(c)) continue;
        active_cells_.push_back(c);
        auto dofs = g.cell_dofs(c);
        for (int a = 0; a < nloc; ++a)
            for (int b = 0; b < nloc; ++b)
                if (dofs[a] >= 0 && dofs[b] >= 0) trips.emplace_back(dofs[a], dofs[b], 0.0);
    }
    const Index n = g.num_dofs();
    pattern_.resize(n, n);
    pattern_.setFromTriplets(trips.begin(), trips.end());
    pattern_.makeCompressed();
    // Ensure every dof has a diagonal entry.
    diagonal_slots_.assign(static_cast<std::size_t>(n), -1);

    auto find_slot = [this](Index row, Index col) -> Index {
        const auto *outer = pattern_.outerIndexPtr();
        const auto *inner = pattern_.innerIndexPtr();
        auto begin = inner + outer[col];
        auto end = inner + outer[col + 1];
        auto it = std::lower_bound(begin, end, static_cast<int>(row));
        if (it == end || *it != row) return -1;
        return static_cast<Index>(it - inner);
    };
    slots_.assign(active_cells_.size() * static_cast<std::size_t>(nloc * nloc), -1);
    for (std::size_t ac = 0; ac < active_cells_.size(); ++ac) {
        auto dofs = g.cell_dofs(active_cells_[ac]);
        for (int a = 0; a < nloc; ++a)
            for (int b = 0; b < nloc; ++b)
                if (dofs[a] >= 0 && dofs[b] >= 0)
                    slots_[ac * static_cast<std::size_t>(nloc * nloc) + static_cast<std::size_t>(a * nloc + b)] =
                        find_slot(dofs[a], dofs[b]);
    }
    for (Index d = 0; d < n; ++d) diagonal_slots_[static_cast<std::size_t>(d)] = find_slot(d, d);
}

void StiffnessAssembler::add_diagonal(SparseMatrix &k, const Eigen::VectorXd &d) const {
    double *values = k.valuePtr();
    for (Index i = 0; i < d.size(); ++i) {
        const Index s = diagonal_slots_[static_cast<std::size_t>(i)];
        if (s < 0) throw Error("missing diagonal entry in stiffness pattern");
        values[s] += d(i);
    }
}

} // namespace triscale
