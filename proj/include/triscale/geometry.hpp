#pragma once

#include "triscale/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace triscale {

enum class ShapeKind { Box, Disk };

/// An axis-aligned box or a disk/ball in the unit cell, repeated periodically.
/// Shapes are open sets; membership uses the minimum-image distance to `center`.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::Box;
    Vec center;
    Vec half_widths; // Box only
    double radius = 0.0; // Disk only

    static ShapeSpec box(const Vec &center, const Vec &half_widths);
    static ShapeSpec disk(const Vec &center, double radius);

    int dim() const { return static_cast<int>(center.size()); }
    bool contains(const Vec &p) const;
    double exact_measure() const;

    /// Box faces fall on multiples of 1/base (after periodic wrap).
    bool is_grid_exact(int base) const;
    void validate() const;
};

/// Indicator raster on a uniform n^N grid over [0,1)^N (x-fastest ordering),
/// sampled at cell centers.
struct Raster {
    int dim = 2;
    int n = 0;
    std::vector<std::uint8_t> inside;

    Index size() const { return static_cast<Index>(inside.size()); }
    double measure() const;
};

Raster rasterize_complement(const std::vector<ShapeSpec> &holes, int n, int dim);

/// True when the periodic repetition of the set is connected: one component on the
/// torus whose wrap vectors generate the full integer lattice.
bool periodic_connected(const Raster &r);

struct GeometryOptions {
    /// Allows |Z_s| = 1 and |Y_m| = 1 (no pores / no fractures).
    bool allow_unperforated = false;
};

/// Fracture cell Y = Y_m ∪ Y_c and pore cell Z = Z_s ∪ Z_p.
struct CellGeometry {
    int dim = 2;
    std::vector<ShapeSpec> fracture_shapes;
    std::vector<ShapeSpec> pore_shapes;
    Raster matrix; // Y_m at n_y
    Raster solid;  // Z_s at n_z
    double measure_matrix = 1.0; // |Y_m|
    double measure_solid = 1.0;  // |Z_s|
    bool matrix_connected = true;
    bool solid_connected = true;

    int n_y() const { return matrix.n; }
    int n_z() const { return solid.n; }
    bool in_matrix(const Vec &y) const; // analytic, y taken mod 1
    bool in_solid(const Vec &z) const;  // analytic, z taken mod 1
    bool unperforated() const { return fracture_shapes.empty() && pore_shapes.empty(); }
    bool grid_exact(int base) const;
};

CellGeometry build_cell_geometry(const std::vector<ShapeSpec> &fracture_shapes,
                                 const std::vector<ShapeSpec> &pore_shapes, int n_y, int n_z, int dim,
                                 const GeometryOptions &options = {});

/// Re-rasterizes an existing geometry at new resolutions.
CellGeometry with_resolution(const CellGeometry &geom, int n_y, int n_z,
                             const GeometryOptions &options = {.allow_unperforated = true});

/// χ_{Y_m}(x/ε) · χ_{Z_s}(x/ε²).
int perforated_indicator(const CellGeometry &geom, double eps, const Vec &x);

/// Writes a raster as an ASCII PGM (3-D rasters are stacked slice by slice).
void write_pgm(const Raster &r, const std::string &path);

} // namespace triscale
