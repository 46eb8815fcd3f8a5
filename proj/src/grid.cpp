#include "triscale/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <queue>

namespace triscale {

StructuredGrid::StructuredGrid(Spec spec) : spec_(std::move(spec)) {
    const int dim = spec_.dim;
    if (dim < 1 || dim > 3) throw Error("grid dimension must be 1, 2 or 3");
    if (spec_.origin.size() == 0) spec_.origin = Vec::Zero(dim);
    if (spec_.lengths.size() == 0) spec_.lengths = Vec::Ones(dim);
    spacing_.resize(dim);
    num_cells_ = 1;
    num_nodes_ = 1;
    for (int a = 0; a < dim; ++a) {
        const int n = spec_.cells[static_cast<std::size_t>(a)];
        if (n < 1) throw Error("grid needs at least one cell per axis");
        if (periodic(a) && n < 2) throw Error("periodic axis needs at least two cells");
        spacing_(a) = spec_.lengths(a) / n;
        nodes_[static_cast<std::size_t>(a)] = periodic(a) ? n : n + 1;
        num_cells_ *= n;
        num_nodes_ *= nodes_[static_cast<std::size_t>(a)];
    }
    for (int a = dim; a < 3; ++a) {
        spec_.cells[static_cast<std::size_t>(a)] = 1;
        nodes_[static_cast<std::size_t>(a)] = 1;
    }

    if (spec_.cell_active.empty()) {
        active_.assign(static_cast<std::size_t>(num_cells_), 1);
    } else {
        if (static_cast<Index>(spec_.cell_active.size()) != num_cells_) throw Error("cell mask size mismatch");
        active_ = spec_.cell_active;
    }
    spec_.cell_active.clear();

    std::vector<std::uint8_t> touched(static_cast<std::size_t>(num_nodes_), 0);
    num_active_cells_ = 0;
    for (Index c = 0; c < num_cells_; ++c) {
        if (!active_[static_cast<std::size_t>(c)]) continue;
        ++num_active_cells_;
        auto nodes = cell_nodes(c);
        for (int a = 0; a < nodes_per_cell(); ++a) touched[static_cast<std::size_t>(nodes[a])] = 1;
    }
    node_dof_.assign(static_cast<std::size_t>(num_nodes_), -1);
    for (Index n = 0; n < num_nodes_; ++n) {
        if (!touched[static_cast<std::size_t>(n)]) continue;
        if (spec_.dirichlet) {
            auto ijk = node_ijk(n);
            bool boundary = false;
            for (int a = 0; a < dim; ++a) {
                if (!periodic(a) && (ijk[a] == 0 || ijk[a] == cells(a))) boundary = true;
            }
            if (boundary) continue;
        }
        node_dof_[static_cast<std::size_t>(n)] = static_cast<Index>(dof_node_.size());
        dof_node_.push_back(n);
    }
}

std::array<int, 3> StructuredGrid::cell_ijk(Index cell) const {
    std::array<int, 3> ijk{0, 0, 0};
    for (int a = 0; a < dim(); ++a) {
        ijk[a] = static_cast<int>(cell % cells(a));
        cell /= cells(a);
    }
    return ijk;
}

std::array<int, 3> StructuredGrid::node_ijk(Index node) const {
    std::array<int, 3> ijk{0, 0, 0};
    for (int a = 0; a < dim(); ++a) {
        ijk[a] = static_cast<int>(node % nodes(a));
        node /= nodes(a);
    }
    return ijk;
}

Index StructuredGrid::cell_index(const std::array<int, 3> &ijk) const {
    Index idx = 0;
    for (int a = dim() - 1; a >= 0; --a) idx = idx * cells(a) + ijk[a];
    return idx;
}

Index StructuredGrid::node_index(const std::array<int, 3> &ijk) const {
    Index idx = 0;
    for (int a = dim() - 1; a >= 0; --a) idx = idx * nodes(a) + ijk[a];
    return idx;
}

std::array<Index, 8> StructuredGrid::cell_nodes(Index cell) const {
    std::array<Index, 8> out{};
    const auto base = cell_ijk(cell);
    for (int loc = 0; loc < nodes_per_cell(); ++loc) {
        std::array<int, 3> ijk = base;
        for (int a = 0; a < dim(); ++a) {
            if (loc & (1 << a)) {
                ijk[a] += 1;
                if (periodic(a) && ijk[a] == cells(a)) ijk[a] = 0;
            }
        }
        out[loc] = node_index(ijk);
    }
    return out;
}

std::array<Index, 8> StructuredGrid::cell_dofs(Index cell) const {
    auto nodes = cell_nodes(cell);
    std::array<Index, 8> out{};
    out.fill(-1);
    for (int loc = 0; loc < nodes_per_cell(); ++loc) out[loc] = node_dof(nodes[loc]);
    return out;
}

Vec StructuredGrid::cell_center(Index cell) const {
    auto ijk = cell_ijk(cell);
    Vec p(dim());
    for (int a = 0; a < dim(); ++a) p(a) = origin()(a) + (ijk[a] + 0.5) * spacing_(a);
    return p;
}

Vec StructuredGrid::node_coord(Index node) const {
    auto ijk = node_ijk(node);
    Vec p(dim());
    for (int a = 0; a < dim(); ++a) p(a) = origin()(a) + ijk[a] * spacing_(a);
    return p;
}

Index StructuredGrid::locate(const Vec &x, Vec &local) const {
    std::array<int, 3> ijk{0, 0, 0};
    local.resize(dim());
    for (int a = 0; a < dim(); ++a) {
        double s = (x(a) - origin()(a)) / spacing_(a);
        if (periodic(a)) {
            const double n = cells(a);
            s = s - n * std::floor(s / n);
            if (s >= n) s -= n;
        } else {
            s = std::clamp(s, 0.0, static_cast<double>(cells(a)));
        }
        int i = static_cast<int>(std::floor(s));
        if (i >= cells(a)) i = cells(a) - 1;
        if (i < 0) i = 0;
        ijk[a] = i;
        local(a) = s - i;
    }
    return cell_index(ijk);
}

bool StructuredGrid::active_cells_connected() const {
    Index start = -1;
    for (Index c = 0; c < num_cells_; ++c) {
        if (cell_active(c)) {
            start = c;
            break;
        }
    }
    if (start < 0) return false;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(num_cells_), 0);
    std::queue<Index> q;
    q.push(start);
    seen[static_cast<std::size_t>(start)] = 1;
    Index count = 1;
    while (!q.empty()) {
        Index c = q.front();
        q.pop();
        auto ijk = cell_ijk(c);
        for (int a = 0; a < dim(); ++a) {
            for (int s : {-1, 1}) {
                auto nb = ijk;
                nb[a] += s;
                if (nb[a] < 0 || nb[a] >= cells(a)) {
                    if (!periodic(a)) continue;
                    nb[a] = (nb[a] + cells(a)) % cells(a);
                }
                Index ni = cell_index(nb);
                if (!cell_active(ni) || seen[static_cast<std::size_t>(ni)]) continue;
                seen[static_cast<std::size_t>(ni)] = 1;
                ++count;
                q.push(ni);
            }
        }
    }
    return count == num_active_cells_;
}

GridPtr make_periodic_cell_grid(int dim, int n, std::vector<std::uint8_t> mask) {
    StructuredGrid::Spec s;
    s.dim = dim;
    for (int a = 0; a < dim; ++a) {
        s.cells[static_cast<std::size_t>(a)] = n;
        s.periodic[static_cast<std::size_t>(a)] = true;
    }
    s.origin = Vec::Zero(dim);
    s.lengths = Vec::Ones(dim);
    s.cell_active = std::move(mask);
    return std::make_shared<const StructuredGrid>(std::move(s));
}

GridPtr make_dirichlet_box_grid(int dim, const std::array<int, 3> &cells, const Vec &lengths,
                                std::vector<std::uint8_t> mask) {
    StructuredGrid::Spec s;
    s.dim = dim;
    s.cells = cells;
    s.origin = Vec::Zero(dim);
    s.lengths = lengths;
    s.dirichlet = true;
    s.cell_active = std::move(mask);
    return std::make_shared<const StructuredGrid>(std::move(s));
}

FieldOnGrid::FieldOnGrid(GridPtr g, Eigen::VectorXd v, int comps)
    : grid(std::move(g)), components(comps), values(std::move(v)) {
    if (values.size() != grid->num_dofs() * components) throw Error("field size does not match dof count");
}

double interpolate(const StructuredGrid &grid, const Eigen::VectorXd &dof_values, const Vec &x) {
    Vec local;
    Index cell = grid.locate(x, local);
    auto dofs = grid.cell_dofs(cell);
    double value = 0.0;
    for (int loc = 0; loc < grid.nodes_per_cell(); ++loc) {
        if (dofs[loc] < 0) continue;
        double w = 1.0;
        for (int a = 0; a < grid.dim(); ++a) w *= (loc & (1 << a)) ? local(a) : 1.0 - local(a);
        value += w * dof_values(dofs[loc]);
    }
    return value;
}

Vec cell_center_gradient(const StructuredGrid &grid, const Eigen::VectorXd &dof_values, Index cell) {
    auto dofs = grid.cell_dofs(cell);
    const int dim = grid.dim();
    const double scale = 1.0 / (1 << (dim - 1));
    Vec g = Vec::Zero(dim);
    for (int loc = 0; loc < grid.nodes_per_cell(); ++loc) {
        if (dofs[loc] < 0) continue;
        const double u = dof_values(dofs[loc]);
        for (int a = 0; a < dim; ++a) {
            const double sign = (loc & (1 << a)) ? 1.0 : -1.0;
            g(a) += sign * scale * u / grid.spacing(a);
        }
    }
    return g;
}

void write_csv(const FieldOnGrid &field, const std::string &path, const std::vector<std::string> &names) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    const auto &g = *field.grid;
    const char *axis[] = {"x", "y", "z"};
    for (int a = 0; a < g.dim(); ++a) out << axis[a] << ',';
    out << "active";
    for (int k = 0; k < field.components; ++k)
        out << ',' << (k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)] : "u" + std::to_string(k));
    out << '\n' << std::setprecision(17);
    for (Index n = 0; n < g.num_nodes(); ++n) {
        Vec p = g.node_coord(n);
        for (int a = 0; a < g.dim(); ++a) out << p(a) << ',';
        const Index d = g.node_dof(n);
        out << (d >= 0 ? 1 : 0);
        for (int k = 0; k < field.components; ++k) out << ',' << (d >= 0 ? field(d, k) : 0.0);
        out << '\n';
    }
}

void write_vtk(const FieldOnGrid &field, const std::string &path, const std::string &name) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    const auto &g = *field.grid;
    out << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << g.nodes(0) << ' ' << (g.dim() > 1 ? g.nodes(1) : 1) << ' ' << (g.dim() > 2 ? g.nodes(2) : 1)
        << '\n';
    out << "ORIGIN " << g.origin()(0) << ' ' << (g.dim() > 1 ? g.origin()(1) : 0.0) << ' '
        << (g.dim() > 2 ? g.origin()(2) : 0.0) << '\n';
    out << "SPACING " << g.spacing(0) << ' ' << (g.dim() > 1 ? g.spacing(1) : 1.0) << ' '
        << (g.dim() > 2 ? g.spacing(2) : 1.0) << '\n';
    out << "POINT_DATA " << g.num_nodes() << '\n' << std::setprecision(12);
    if (field.components == 1) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (Index n = 0; n < g.num_nodes(); ++n) {
            const Index d = g.node_dof(n);
            out << (d >= 0 ? field(d) : 0.0) << '\n';
        }
    } else {
        out << "VECTORS " << name << " double\n";
        for (Index n = 0; n < g.num_nodes(); ++n) {
            const Index d = g.node_dof(n);
            for (int k = 0; k < 3; ++k) out << ((d >= 0 && k < field.components) ? field(d, k) : 0.0) << (k < 2 ? ' ' : '\n');
        }
    }
    out << "SCALARS active int 1\nLOOKUP_TABLE default\n";
    for (Index n = 0; n < g.num_nodes(); ++n) out << (g.node_dof(n) >= 0 ? 1 : 0) << '\n';
}

} // namespace triscale
