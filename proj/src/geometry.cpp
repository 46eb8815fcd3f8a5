#include "triscale/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

namespace triscale {

namespace {

constexpr double kPi = 3.14159265358979323846;

double min_image(double d) { return d - std::round(d); }

Index int_pow(int n, int dim) {
    Index p = 1;
    for (int a = 0; a < dim; ++a) p *= n;
    return p;
}

Vec cell_center(Index idx, int n, int dim) {
    Vec p(dim);
    for (int a = 0; a < dim; ++a) {
        p(a) = (static_cast<double>(idx % n) + 0.5) / n;
        idx /= n;
    }
    return p;
}

// Integer row reduction: do the vectors generate Z^dim?
bool generates_lattice(std::vector<std::array<long, 3>> vs, int dim) {
    for (int col = 0; col < dim; ++col) {
        // Euclid on column `col` among rows not yet used as pivots.
        std::vector<std::array<long, 3>> rest;
        std::array<long, 3> pivot{0, 0, 0};
        bool have = false;
        for (auto v : vs) {
            if (v[col] == 0) {
                rest.push_back(v);
                continue;
            }
            if (!have) {
                pivot = v;
                have = true;
                continue;
            }
            while (v[col] != 0) {
                long q = pivot[col] / v[col];
                for (int a = 0; a < dim; ++a) pivot[a] -= q * v[a];
                std::swap(pivot, v);
            }
            rest.push_back(v);
        }
        if (!have || std::abs(pivot[col]) != 1) return false;
        vs = std::move(rest);
    }
    return true;
}

} // namespace

ShapeSpec ShapeSpec::box(const Vec &center, const Vec &half_widths) {
    ShapeSpec s;
    s.kind = ShapeKind::Box;
    s.center = center;
    s.half_widths = half_widths;
    s.validate();
    return s;
}

ShapeSpec ShapeSpec::disk(const Vec &center, double radius) {
    ShapeSpec s;
    s.kind = ShapeKind::Disk;
    s.center = center;
    s.radius = radius;
    s.validate();
    return s;
}

void ShapeSpec::validate() const {
    if (dim() < 2 || dim() > 3) throw GeometryError("shape dimension must be 2 or 3");
    if ((center.array() < 0.0).any() || (center.array() >= 1.0).any())
        throw GeometryError("shape center must lie in [0,1)^N");
    if (kind == ShapeKind::Box) {
        if (half_widths.size() != center.size()) throw GeometryError("box half-widths dimension mismatch");
        if ((half_widths.array() <= 0.0).any() || (half_widths.array() > 0.5).any())
            throw GeometryError("box half-widths must lie in (0, 1/2]");
    } else if (radius <= 0.0 || radius > 0.5) {
        throw GeometryError("disk radius must lie in (0, 1/2]");
    }
}

bool ShapeSpec::contains(const Vec &p) const {
    if (kind == ShapeKind::Box) {
        for (int a = 0; a < dim(); ++a) {
            if (std::abs(min_image(p(a) - center(a))) >= half_widths(a)) return false;
        }
        return true;
    }
    double r2 = 0.0;
    for (int a = 0; a < dim(); ++a) {
        double d = min_image(p(a) - center(a));
        r2 += d * d;
    }
    return r2 < radius * radius;
}

double ShapeSpec::exact_measure() const {
    if (kind == ShapeKind::Box) return (2.0 * half_widths).prod();
    return dim() == 2 ? kPi * radius * radius : 4.0 / 3.0 * kPi * radius * radius * radius;
}

bool ShapeSpec::is_grid_exact(int base) const {
    if (kind != ShapeKind::Box) return false;
    auto on_grid = [base](double s) {
        double v = s * base;
        return std::abs(v - std::round(v)) < 1e-9;
    };
    for (int a = 0; a < dim(); ++a) {
        if (!on_grid(center(a) - half_widths(a)) || !on_grid(center(a) + half_widths(a))) return false;
    }
    return true;
}

double Raster::measure() const {
    if (inside.empty()) return 0.0;
    auto count = std::count(inside.begin(), inside.end(), std::uint8_t{1});
    return static_cast<double>(count) / static_cast<double>(inside.size());
}

Raster rasterize_complement(const std::vector<ShapeSpec> &holes, int n, int dim) {
    Raster r;
    r.dim = dim;
    r.n = n;
    const Index total = int_pow(n, dim);
    r.inside.assign(static_cast<std::size_t>(total), 1);
    for (Index i = 0; i < total; ++i) {
        Vec p = cell_center(i, n, dim);
        for (const auto &s : holes) {
            if (s.contains(p)) {
                r.inside[static_cast<std::size_t>(i)] = 0;
                break;
            }
        }
    }
    return r;
}

bool periodic_connected(const Raster &r) {
    const int n = r.n;
    const int dim = r.dim;
    const Index total = r.size();
    auto first = std::find(r.inside.begin(), r.inside.end(), std::uint8_t{1});
    if (first == r.inside.end()) return false;

    // BFS on the torus, recording the unwrapped lattice shift of each visited cell.
    std::vector<std::array<long, 3>> shift(static_cast<std::size_t>(total), {0, 0, 0});
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(total), 0);
    std::vector<std::array<long, 3>> wraps;
    std::queue<Index> q;
    Index start = first - r.inside.begin();
    seen[static_cast<std::size_t>(start)] = 1;
    q.push(start);
    Index visited = 1;
    Index stride[3] = {1, n, static_cast<Index>(n) * n};
    while (!q.empty()) {
        Index c = q.front();
        q.pop();
        std::array<int, 3> ijk{0, 0, 0};
        Index t = c;
        for (int a = 0; a < dim; ++a) {
            ijk[a] = static_cast<int>(t % n);
            t /= n;
        }
        for (int a = 0; a < dim; ++a) {
            for (int s : {-1, 1}) {
                int v = ijk[a] + s;
                long jump = 0;
                if (v < 0) {
                    v += n;
                    jump = -1;
                } else if (v >= n) {
                    v -= n;
                    jump = 1;
                }
                Index nb = c + (v - ijk[a]) * stride[a];
                if (!r.inside[static_cast<std::size_t>(nb)]) continue;
                auto sh = shift[static_cast<std::size_t>(c)];
                sh[a] += jump;
                if (!seen[static_cast<std::size_t>(nb)]) {
                    seen[static_cast<std::size_t>(nb)] = 1;
                    shift[static_cast<std::size_t>(nb)] = sh;
                    q.push(nb);
                    ++visited;
                } else {
                    const auto &old = shift[static_cast<std::size_t>(nb)];
                    std::array<long, 3> w{sh[0] - old[0], sh[1] - old[1], sh[2] - old[2]};
                    if ((w[0] || w[1] || w[2]) && wraps.size() < 256 &&
                        std::find(wraps.begin(), wraps.end(), w) == wraps.end())
                        wraps.push_back(w);
                }
            }
        }
    }
    auto count = std::count(r.inside.begin(), r.inside.end(), std::uint8_t{1});
    if (visited != count) return false;
    return generates_lattice(wraps, dim);
}

bool CellGeometry::in_matrix(const Vec &y) const {
    for (const auto &s : fracture_shapes)
        if (s.contains(y)) return false;
    return true;
}

bool CellGeometry::in_solid(const Vec &z) const {
    for (const auto &s : pore_shapes)
        if (s.contains(z)) return false;
    return true;
}

bool CellGeometry::grid_exact(int base) const {
    auto exact = [base](const ShapeSpec &s) { return s.is_grid_exact(base); };
    return std::all_of(fracture_shapes.begin(), fracture_shapes.end(), exact) &&
           std::all_of(pore_shapes.begin(), pore_shapes.end(), exact);
}

CellGeometry build_cell_geometry(const std::vector<ShapeSpec> &fracture_shapes,
                                 const std::vector<ShapeSpec> &pore_shapes, int n_y, int n_z, int dim,
                                 const GeometryOptions &options) {
    if (dim != 2 && dim != 3) throw GeometryError("dimension must be 2 or 3");
    if (n_y < 8 || n_z < 8) throw GeometryError("cell resolutions must be >= 8");
    for (const auto *list : {&fracture_shapes, &pore_shapes}) {
        for (const auto &s : *list) {
            s.validate();
            if (s.dim() != dim) throw GeometryError("shape dimension does not match cell dimension");
        }
    }

    CellGeometry g;
    g.dim = dim;
    g.fracture_shapes = fracture_shapes;
    g.pore_shapes = pore_shapes;
    g.matrix = rasterize_complement(fracture_shapes, n_y, dim);
    g.solid = rasterize_complement(pore_shapes, n_z, dim);
    g.measure_matrix = g.matrix.measure();
    g.measure_solid = g.solid.measure();

    if (g.measure_matrix <= 0.0) throw GeometryError("empty phase: |Y_m| = 0");
    if (g.measure_solid <= 0.0) throw GeometryError("empty phase: |Z_s| = 0");
    if (!fracture_shapes.empty() && g.measure_matrix >= 1.0)
        throw GeometryError("empty phase: fracture shapes cover no raster cell at n_y");
    if (!pore_shapes.empty() && g.measure_solid >= 1.0)
        throw GeometryError("empty phase: pore shapes cover no raster cell at n_z");
    if (g.measure_solid >= 1.0 && !options.allow_unperforated)
        throw GeometryError("empty phase: |Z_s| must satisfy 0 < |Z_s| < 1 (enable unperforated mode)");
    if (g.measure_matrix >= 1.0 && !options.allow_unperforated && fracture_shapes.empty() && pore_shapes.empty())
        throw GeometryError("empty phase: trivial medium requires unperforated mode");

    g.matrix_connected = periodic_connected(g.matrix);
    g.solid_connected = periodic_connected(g.solid);
    if (!g.matrix_connected) throw GeometryError("disconnected matrix: periodic repetition of Y_m is not connected");
    if (!g.solid_connected) throw GeometryError("disconnected matrix: periodic repetition of Z_s is not connected");
    return g;
}

CellGeometry with_resolution(const CellGeometry &geom, int n_y, int n_z, const GeometryOptions &options) {
    return build_cell_geometry(geom.fracture_shapes, geom.pore_shapes, n_y, n_z, geom.dim, options);
}

int perforated_indicator(const CellGeometry &geom, double eps, const Vec &x) {
    Vec y(x.size()), z(x.size());
    for (Index a = 0; a < x.size(); ++a) {
        y(a) = wrap_unit(x(a) / eps);
        z(a) = wrap_unit(x(a) / (eps * eps));
    }
    return (geom.in_matrix(y) && geom.in_solid(z)) ? 1 : 0;
}

void write_pgm(const Raster &r, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    const int n = r.n;
    const int rows = r.dim == 2 ? n : n * n;
    out << "P2\n" << n << ' ' << rows << "\n255\n";
    for (int row = 0; row < rows; ++row) {
        for (int col = 0; col < n; ++col) {
            // Image rows run top-down; put y = 1 at the top of each slice.
            int slice = row / n;
            int j = n - 1 - (row % n);
            Index idx = col + static_cast<Index>(j) * n + static_cast<Index>(slice) * n * n;
            out << (r.inside[static_cast<std::size_t>(idx)] ? 255 : 0) << (col + 1 < n ? ' ' : '\n');
        }
    }
}

} // namespace triscale
