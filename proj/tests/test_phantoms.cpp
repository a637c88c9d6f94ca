#include <cmath>
#include <random>

#include <doctest.h>

#include "ctdl/phantoms.hpp"

using namespace ctdl;

TEST_CASE("shepp-logan is clamped, symmetric, and structured") {
    const ImageGrid grid{256, 256, 1.0};
    const Image f = shepp_logan(grid);

    double lo = 1e9, hi = -1e9;
    for (double v : f.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
    CHECK(hi > 0.5); // skull shell present

    // exact mirror symmetry about the vertical axis
    for (int r = 0; r < grid.ny; ++r)
        for (int c = 0; c < grid.nx; ++c)
            REQUIRE(f.at(r, c) == doctest::Approx(f.at(r, grid.nx - 1 - c)).epsilon(1e-12));

    // brain tissue at the center: 1.0 (skull) - 0.8 (interior) = 0.2
    CHECK(f.at(grid.ny / 2, grid.nx / 2) == doctest::Approx(0.2));
    // corners empty
    CHECK(f.at(0, 0) == 0.0);
    CHECK(f.at(grid.ny - 1, grid.nx - 1) == 0.0);
}

TEST_CASE("disc phantom area matches pi r^2") {
    const ImageGrid grid{128, 128, 1.0};
    const double radius = 40.0;
    const Image f = disc_phantom(grid, radius, 1.0);
    double area = 0.0;
    for (double v : f.values) area += v;
    area *= grid.pixel_size_mm * grid.pixel_size_mm;
    CHECK(area == doctest::Approx(M_PI * radius * radius).epsilon(0.01));
}

TEST_CASE("random ellipse phantom is deterministic and body-supported") {
    const ImageGrid grid{64, 64, 1.0};
    std::mt19937_64 rng1(42), rng2(42), rng3(43);
    const Image a = random_ellipse_phantom(grid, rng1, 8);
    const Image b = random_ellipse_phantom(grid, rng2, 8);
    const Image c = random_ellipse_phantom(grid, rng3, 8);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);

    for (double v : a.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // corners are outside the elliptical body
    CHECK(a.at(0, 0) == 0.0);
    CHECK(a.at(0, grid.nx - 1) == 0.0);
    CHECK(a.at(grid.ny - 1, 0) == 0.0);
    // body interior is occupied (baseline 0.2 plus inserts, clamped >= 0)
    double mass = 0.0;
    for (double v : a.values) mass += v;
    CHECK(mass > 0.1 * double(grid.size()) * 0.2);

    CHECK_THROWS_AS(random_ellipse_phantom(grid, rng1, 0), std::invalid_argument);
}

TEST_CASE("vertical-axis flip is an involution and fixes symmetric images") {
    const ImageGrid grid{64, 64, 1.0};
    std::mt19937_64 rng(9);
    const Image a = random_ellipse_phantom(grid, rng, 5);
    CHECK(flip_vertical_axis(flip_vertical_axis(a)).values == a.values);

    const Image sl = shepp_logan(grid);
    const Image flipped = flip_vertical_axis(sl);
    for (std::size_t i = 0; i < sl.values.size(); ++i)
        CHECK(flipped.values[i] == doctest::Approx(sl.values[i]).epsilon(1e-12));
}
