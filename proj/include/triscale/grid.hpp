#pragma once

#include "triscale/types.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace triscale {

/// Uniform structured grid of Q1 cells, optionally periodic per axis, optionally
/// masked (inactive cells), optionally with homogeneous Dirichlet nodes removed on
/// the non-periodic boundary. Cells and nodes are numbered x-fastest.
class StructuredGrid {
public:
    struct Spec {
        int dim = 2;
        std::array<int, 3> cells{0, 0, 0};
        Vec origin;
        Vec lengths;
        std::array<bool, 3> periodic{false, false, false};
        bool dirichlet = false;
        std::vector<std::uint8_t> cell_active; // empty = all active
    };

    explicit StructuredGrid(Spec spec);

    int dim() const { return spec_.dim; }
    int cells(int axis) const { return spec_.cells[static_cast<std::size_t>(axis)]; }
    int nodes(int axis) const { return nodes_[static_cast<std::size_t>(axis)]; }
    bool periodic(int axis) const { return spec_.periodic[static_cast<std::size_t>(axis)]; }
    bool dirichlet() const { return spec_.dirichlet; }
    double spacing(int axis) const { return spacing_(axis); }
    const Vec &spacing() const { return spacing_; }
    const Vec &origin() const { return spec_.origin; }
    const Vec &lengths() const { return spec_.lengths; }
    double cell_volume() const { return spacing_.prod(); }

    Index num_cells() const { return num_cells_; }
    Index num_nodes() const { return num_nodes_; }
    Index num_dofs() const { return static_cast<Index>(dof_node_.size()); }
    Index num_active_cells() const { return num_active_cells_; }
    int nodes_per_cell() const { return 1 << spec_.dim; }

    bool cell_active(Index c) const { return active_[static_cast<std::size_t>(c)] != 0; }
    const std::vector<std::uint8_t> &cell_mask() const { return active_; }
    Index node_dof(Index node) const { return node_dof_[static_cast<std::size_t>(node)]; }
    Index dof_node(Index dof) const { return dof_node_[static_cast<std::size_t>(dof)]; }

    /// Node indices of a cell; local node a has offset bit k of a along axis k.
    std::array<Index, 8> cell_nodes(Index cell) const;
    /// Dof indices of a cell (-1 for eliminated/inactive nodes).
    std::array<Index, 8> cell_dofs(Index cell) const;

    std::array<int, 3> cell_ijk(Index cell) const;
    std::array<int, 3> node_ijk(Index node) const;
    Index cell_index(const std::array<int, 3> &ijk) const;
    Index node_index(const std::array<int, 3> &ijk) const;

    Vec cell_center(Index cell) const;
    Vec node_coord(Index node) const;
    Vec dof_coord(Index dof) const { return node_coord(dof_node(dof)); }

    /// Cell containing x (wrapped on periodic axes, clamped otherwise) and the local
    /// coordinates of x inside that cell in [0,1]^N.
    Index locate(const Vec &x, Vec &local) const;

    /// Face-connectedness of the active cells under the grid's periodicity.
    bool active_cells_connected() const;

private:
    Spec spec_;
    Vec spacing_;
    std::array<int, 3> nodes_{1, 1, 1};
    Index num_cells_ = 0;
    Index num_nodes_ = 0;
    Index num_active_cells_ = 0;
    std::vector<std::uint8_t> active_;
    std::vector<Index> node_dof_;
    std::vector<Index> dof_node_;
};

using GridPtr = std::shared_ptr<const StructuredGrid>;

/// Fully periodic grid on the unit cell [0,1)^N with n cells per axis.
GridPtr make_periodic_cell_grid(int dim, int n, std::vector<std::uint8_t> mask = {});

/// Box [0,L]^N grid with homogeneous Dirichlet data on the boundary.
GridPtr make_dirichlet_box_grid(int dim, const std::array<int, 3> &cells, const Vec &lengths,
                                std::vector<std::uint8_t> mask = {});

/// Nodal scalar or vector field, values stored dof-major (dof * components + k).
struct FieldOnGrid {
    GridPtr grid;
    int components = 1;
    Eigen::VectorXd values;

    FieldOnGrid() = default;
    FieldOnGrid(GridPtr g, Eigen::VectorXd v, int comps = 1);

    double operator()(Index dof, int k = 0) const { return values(dof * components + k); }
    bool finite() const { return values.allFinite(); }
};

/// Q1 interpolation of dof values at x (eliminated nodes contribute zero).
double interpolate(const StructuredGrid &grid, const Eigen::VectorXd &dof_values, const Vec &x);

/// Gradient of the Q1 interpolant at the center of a cell.
Vec cell_center_gradient(const StructuredGrid &grid, const Eigen::VectorXd &dof_values, Index cell);

/// Nodal values from a function of position (eliminated nodes skipped).
template <typename F>
Eigen::VectorXd sample_nodes(const StructuredGrid &grid, F &&f) {
    Eigen::VectorXd v(grid.num_dofs());
    for (Index d = 0; d < grid.num_dofs(); ++d) v(d) = f(grid.dof_coord(d));
    return v;
}

/// CSV with one row per node in x-fastest order: coordinates, active flag, values.
void write_csv(const FieldOnGrid &field, const std::string &path, const std::vector<std::string> &names = {});

/// Legacy VTK structured-points file with point data (eliminated nodes written as 0).
void write_vtk(const FieldOnGrid &field, const std::string &path, const std::string &name = "u");

} // namespace triscale
