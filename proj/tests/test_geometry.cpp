#include <doctest.h>

#include "triscale/geometry.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace triscale;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

const double kPi = std::acos(-1.0);

} // namespace

TEST_CASE("empty shape lists give the trivial medium only in unperforated mode") {
    CHECK_THROWS_AS(build_cell_geometry({}, {}, 16, 16, 2), GeometryError);
    auto g = build_cell_geometry({}, {}, 16, 16, 2, {.allow_unperforated = true});
    CHECK(g.measure_matrix == 1.0);
    CHECK(g.measure_solid == 1.0);
    CHECK(g.unperforated());
}

TEST_CASE("centered square pore of side 1/2 leaves |Z_s| = 3/4") {
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    auto g = build_cell_geometry({}, {pore}, 16, 32, 2, {.allow_unperforated = true});
    CHECK(g.measure_solid == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(g.measure_matrix == 1.0);
    CHECK(g.solid_connected);
}

TEST_CASE("disk fracture raster measure approaches 1 - pi/16") {
    const double exact = 1.0 - kPi / 16.0;
    auto frac = ShapeSpec::disk(v2(0.5, 0.5), 0.25);
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    double prev_err = 1.0;
    for (int n : {32, 64, 128, 256}) {
        auto g = build_cell_geometry({frac}, {pore}, n, 16, 2);
        const double err = std::abs(g.measure_matrix - exact);
        CHECK(err <= 2.0 / n);
        CHECK(err <= prev_err + 1.0 / n); // O(1/n) under refinement
        prev_err = err;
    }
}

TEST_CASE("disconnected phases are rejected") {
    // A fracture spanning the full width cuts Y_m into horizontal strips.
    auto strip = ShapeSpec::box(v2(0.5, 0.5), v2(0.5, 0.1));
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    CHECK_THROWS_AS(build_cell_geometry({strip}, {pore}, 32, 32, 2), GeometryError);

    // Z_s reduced to an island: the complement of a frame-shaped pore set.
    auto band_x = ShapeSpec::box(v2(0.0, 0.5), v2(0.1, 0.5));
    auto band_y = ShapeSpec::box(v2(0.5, 0.0), v2(0.5, 0.1));
    CHECK_THROWS_AS(build_cell_geometry({}, {band_x, band_y}, 32, 32, 2), GeometryError);
}

TEST_CASE("periodic connectivity needs wrap vectors spanning the lattice") {
    Raster island = rasterize_complement({}, 8, 2);
    CHECK(periodic_connected(island));
    // Keep only a central block: connected on the torus but an isolated island in R^2.
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i)
            island.inside[static_cast<std::size_t>(i + 8 * j)] = (i >= 2 && i < 6 && j >= 2 && j < 6) ? 1 : 0;
    CHECK_FALSE(periodic_connected(island));
}

TEST_CASE("perforated indicator") {
    auto frac = ShapeSpec::box(v2(0.5, 0.5), v2(0.125, 0.125));
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    auto g = build_cell_geometry({frac}, {pore}, 32, 32, 2);

    SUBCASE("trivial medium is identically one") {
        auto t = build_cell_geometry({}, {}, 8, 8, 2, {.allow_unperforated = true});
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 100; ++i) CHECK(perforated_indicator(t, 0.1 + 0.9 * u(rng), v2(u(rng), u(rng))) == 1);
    }
    SUBCASE("point inside a pore copy at scale eps^2") {
        const double eps = 0.25;
        // pore center of the (1,2) pore cell
        CHECK(perforated_indicator(g, eps, v2(eps * eps * 1.5, eps * eps * 2.5)) == 0);
        CHECK(perforated_indicator(g, eps, v2(eps * eps * 1.05, eps * eps * 2.05)) == 1);
        // fracture center
        CHECK(perforated_indicator(g, eps, v2(eps * 0.5, eps * 1.5)) == 0);
    }
    SUBCASE("lattice consistency of the two factors") {
        const double eps = 0.25;
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<int> k(-3, 3);
        for (int i = 0; i < 500; ++i) {
            Vec x = v2(u(rng), u(rng));
            Vec z(2), zs(2), y(2), ys(2);
            Vec shift = v2(k(rng), k(rng));
            for (int a = 0; a < 2; ++a) {
                z(a) = wrap_unit(x(a) / (eps * eps));
                zs(a) = wrap_unit((x(a) + eps * eps * shift(a)) / (eps * eps));
                y(a) = wrap_unit(x(a) / eps);
                ys(a) = wrap_unit((x(a) + eps * shift(a)) / eps);
            }
            CHECK(g.in_solid(z) == g.in_solid(zs));
            CHECK(g.in_matrix(y) == g.in_matrix(ys));
        }
    }
    SUBCASE("mean of the indicator tends to |Y_m||Z_s|") {
        // Disk fracture: cells are cut by the domain boundary for eps not of the form 1/k.
        auto gd = build_cell_geometry({ShapeSpec::disk(v2(0.5, 0.5), 0.2)}, {pore}, 64, 64, 2);
        const double limit = (1.0 - kPi * 0.04) * 0.75;
        std::vector<double> errs;
        for (double eps : {0.3, 0.15, 0.075}) {
            const int n = static_cast<int>(std::ceil(16.0 / (eps * eps)));
            double sum = 0.0;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) sum += perforated_indicator(gd, eps, v2((i + 0.5) / n, (j + 0.5) / n));
            errs.push_back(std::abs(sum / (double(n) * n) - limit));
        }
        CHECK(errs[2] < errs[0]);
        CHECK(errs[2] < 0.01);
    }
}

TEST_CASE("grid exactness of box shapes") {
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    CHECK(pore.is_grid_exact(4));
    CHECK_FALSE(pore.is_grid_exact(2));
    CHECK_FALSE(ShapeSpec::disk(v2(0.5, 0.5), 0.25).is_grid_exact(64));
}

TEST_CASE("invalid shapes are rejected") {
    CHECK_THROWS_AS(ShapeSpec::disk(v2(0.5, 0.5), 0.6), GeometryError);
    CHECK_THROWS_AS(ShapeSpec::box(v2(1.5, 0.5), v2(0.1, 0.1)), GeometryError);
    CHECK_THROWS_AS(build_cell_geometry({}, {}, 4, 16, 2, {.allow_unperforated = true}), GeometryError);
}

TEST_CASE("three-dimensional cells") {
    Vec c(3), h(3);
    c << 0.5, 0.5, 0.5;
    h << 0.25, 0.25, 0.25;
    auto g = build_cell_geometry({}, {ShapeSpec::box(c, h)}, 8, 16, 3, {.allow_unperforated = true});
    CHECK(g.measure_solid == doctest::Approx(1.0 - 0.125));
}

TEST_CASE("PGM export") {
    auto pore = ShapeSpec::box(v2(0.5, 0.5), v2(0.25, 0.25));
    auto g = build_cell_geometry({}, {pore}, 16, 16, 2, {.allow_unperforated = true});
    auto path = std::filesystem::temp_directory_path() / "triscale_test_pore.pgm";
    write_pgm(g.solid, path.string());
    CHECK(std::filesystem::file_size(path) > 16 * 16);
    std::filesystem::remove(path);
}
