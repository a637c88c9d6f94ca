#include <cmath>
#include <random>

#include <doctest.h>

#include "ctdl/phantoms.hpp"
#include "ctdl/projector.hpp"

using namespace ctdl;

namespace {

FanBeamGeometry small_geometry(int views = 180, int dets = 256, double pitch = 1.0) {
    FanBeamGeometry g;
    g.n_views = views;
    g.angle_start_rad = 0.0;
    g.angle_extent_rad = 2.0 * M_PI;
    g.n_dets = dets;
    g.det_pitch_mm = pitch;
    g.sod_mm = 1000.0;
    g.sdd_mm = 1500.0;
    return g;
}

// Near-parallel pencil-beam geometry: cosine weights are 1 to ~1e-10, so the
// ramp filter can be checked against the pure convolution kernel.
FanBeamGeometry pencil_geometry(int dets, double pitch = 1.0) {
    FanBeamGeometry g;
    g.n_views = 1;
    g.angle_start_rad = 0.0;
    g.angle_extent_rad = 2.0 * M_PI;
    g.n_dets = dets;
    g.det_pitch_mm = pitch;
    g.sod_mm = 5e8;
    g.sdd_mm = 1e9;
    return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void fill_random(std::vector<double>& v, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : v) x = u(rng);
}

} // namespace

TEST_CASE("forward projection matches the chord-length oracle on a disc") {
    const ImageGrid grid{128, 128, 1.0};
    const double radius = 40.0;
    const Image f = disc_phantom(grid, radius, 1.0);
    const FanBeamGeometry g = small_geometry();
    const Sinogram s = forward_project(f, g);

    // central ray passes through the disc center: chord 2R
    const int kc = g.n_dets / 2; // det_u(kc) = +pitch/2, 0.5 mm off center
    CHECK(s.at(0, kc) == doctest::Approx(2.0 * radius).epsilon(0.02));

    // analytic chord length at lateral offset b: 2*sqrt(R^2 - b^2)
    for (int k : {kc + 10, kc + 25, kc - 18}) {
        const double u = g.det_u(k);
        const double gamma = std::atan(u / g.sdd_mm);
        const double b = g.sod_mm * std::sin(gamma); // ray distance from isocenter
        const double chord = 2.0 * std::sqrt(radius * radius - b * b);
        CHECK(s.at(0, k) == doctest::Approx(chord).epsilon(0.03));
    }

    // rays missing the disc entirely read zero
    CHECK(s.at(0, 0) == 0.0);
    CHECK(s.at(0, g.n_dets - 1) == 0.0);

    // full-turn symmetry: view 0 and view 90 see the same centered disc
    for (int k = 0; k < g.n_dets; ++k)
        CHECK(s.at(0, k) == doctest::Approx(s.at(45, k)).epsilon(0.02));
}

TEST_CASE("forward projection is linear") {
    const ImageGrid grid{64, 64, 2.0};
    const FanBeamGeometry g = small_geometry(90, 200, 1.0);
    std::mt19937_64 rng(3);
    Image a(grid), b(grid);
    fill_random(a.values, rng);
    fill_random(b.values, rng);
    Image combo(grid);
    for (std::size_t i = 0; i < combo.values.size(); ++i)
        combo.values[i] = 2.0 * a.values[i] - 0.5 * b.values[i];
    const Sinogram sa = forward_project(a, g);
    const Sinogram sb = forward_project(b, g);
    const Sinogram sc = forward_project(combo, g);
    for (std::size_t i = 0; i < sc.values.size(); ++i)
        CHECK(sc.values[i] ==
              doctest::Approx(2.0 * sa.values[i] - 0.5 * sb.values[i]).epsilon(1e-10));
}

TEST_CASE("back_project is the exact adjoint of forward_project") {
    const ImageGrid grid{128, 128, 1.0};
    const FanBeamGeometry g = small_geometry(180, 256, 1.0);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Image f(grid);
        Sinogram s(g);
        fill_random(f.values, rng);
        fill_random(s.values, rng);
        const double lhs = dot(forward_project(f, g).values, s.values);
        const double rhs = dot(f.values, back_project(s, grid).values);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("projector rejects a grid wider than the detector FOV") {
    const FanBeamGeometry g = small_geometry(90, 64, 1.0); // fov ~ 21 mm
    const ImageGrid grid{128, 128, 1.0};                   // inscribed 64 mm
    const Image f(grid);
    CHECK_THROWS_AS(forward_project(f, g), std::invalid_argument);
}

TEST_CASE("ramp filter impulse response equals the Ram-Lak kernel") {
    // Large detector count so kernel periodization sits below 1e-10.
    const FanBeamGeometry g = pencil_geometry(32768);
    Sinogram s(g);
    const int c = g.n_dets / 2;
    s.at(0, c) = 1.0;
    const Sinogram r = ramp_filter(s);

    // ideal taps (response includes one factor of the pitch): h[0] = 1/4,
    // h[odd j] = -1/(pi^2 j^2), h[even j] = 0 at unit pitch
    CHECK(std::abs(r.at(0, c) - 0.25) < 1e-10);
    for (int j : {1, 3, 5, 9, 25}) {
        const double ideal = -1.0 / (M_PI * M_PI * double(j) * double(j));
        CHECK(std::abs(r.at(0, c + j) - ideal) < 1e-10);
        CHECK(std::abs(r.at(0, c - j) - ideal) < 1e-10);
    }
    for (int j : {2, 4, 10}) {
        CHECK(std::abs(r.at(0, c + j)) < 1e-10);
        CHECK(std::abs(r.at(0, c - j)) < 1e-10);
    }
}

TEST_CASE("ramp filter suppresses a constant in the window interior") {
    // The kernel's discrete spectrum vanishes at DC, so a constant maps to
    // zero up to the finite-window tail sum ~ 2/(pi^2 N), N the half-window.
    const FanBeamGeometry g = pencil_geometry(32768);
    Sinogram s(g);
    for (auto& v : s.values) v = 3.7;
    const Sinogram r = ramp_filter(s);
    const int c = g.n_dets / 2;
    for (int j = -50; j <= 50; ++j) CHECK(std::abs(r.at(0, c + j)) < 1e-4);
    // compared against the raw response scale h[0]*3.7 = 0.925
    CHECK(std::abs(r.at(0, c)) < 1e-4 * 0.25 * 3.7);
}

TEST_CASE("Hann window attenuates relative to Ram-Lak") {
    const FanBeamGeometry g = small_geometry(4, 128, 1.0);
    std::mt19937_64 rng(5);
    Sinogram s(g);
    fill_random(s.values, rng);
    const Sinogram rl = ramp_filter(s, FilterWindow::RamLak);
    const Sinogram hn = ramp_filter(s, FilterWindow::Hann);
    const double e_rl = dot(rl.values, rl.values);
    const double e_hn = dot(hn.values, hn.values);
    CHECK(e_hn < e_rl); // white input: windowed response carries less energy
}

TEST_CASE("ramp_filter_adjoint is the exact adjoint of ramp_filter") {
    const FanBeamGeometry g = small_geometry(8, 200, 1.0);
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Sinogram a(g), b(g);
        fill_random(a.values, rng);
        fill_random(b.values, rng);
        const double lhs = dot(ramp_filter(a).values, b.values);
        const double rhs = dot(a.values, ramp_filter_adjoint(b).values);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
    }
}

TEST_CASE("fbp_backproject_adjoint is the exact adjoint of fbp_backproject") {
    const ImageGrid grid{64, 64, 1.0};
    const FanBeamGeometry g = small_geometry(90, 128, 1.0);
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Sinogram s(g);
        Image f(grid);
        fill_random(s.values, rng);
        fill_random(f.values, rng);
        const double lhs = dot(fbp_backproject(s, grid).values, f.values);
        const double rhs = dot(s.values, fbp_backproject_adjoint(f, g).values);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
    }
}

TEST_CASE("fbp round-trip recovers a disc phantom") {
    const ImageGrid grid{128, 128, 1.0};
    FanBeamGeometry g = small_geometry(360, 512, 0.5);
    const Image f = disc_phantom(grid, 40.0, 1.0);
    const Image r = fbp(forward_project(f, g), grid);

    // NMSE inside 90% of the (grid-limited) field of view
    const double limit = 0.9 * std::min(g.fov_radius_mm(), grid.inscribed_radius_mm());
    double num = 0.0, den = 0.0;
    for (int row = 0; row < grid.ny; ++row)
        for (int col = 0; col < grid.nx; ++col) {
            const double x = (col - 0.5 * (grid.nx - 1)) * grid.pixel_size_mm;
            const double y = (row - 0.5 * (grid.ny - 1)) * grid.pixel_size_mm;
            if (std::hypot(x, y) >= limit) continue;
            const double e = f.at(row, col) - r.at(row, col);
            num += e * e;
            den += f.at(row, col) * f.at(row, col);
        }
    CHECK(num / den < 2e-2);
}

TEST_CASE("fbp is linear") {
    const ImageGrid grid{64, 64, 1.0};
    const FanBeamGeometry g = small_geometry(90, 128, 1.0);
    std::mt19937_64 rng(31);
    Sinogram s(g);
    fill_random(s.values, rng);
    Sinogram s2(g);
    for (std::size_t i = 0; i < s2.values.size(); ++i) s2.values[i] = -3.0 * s.values[i];
    const Image r = fbp(s, grid);
    const Image r2 = fbp(s2, grid);
    for (std::size_t i = 0; i < r.values.size(); ++i)
        CHECK(r2.values[i] == doctest::Approx(-3.0 * r.values[i]).epsilon(1e-9));
}

TEST_CASE("fbp_adjoint is the exact adjoint of fbp") {
    const ImageGrid grid{64, 64, 1.0};
    const FanBeamGeometry g = small_geometry(90, 128, 1.0);
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 5; ++trial) {
        Sinogram s(g);
        Image f(grid);
        fill_random(s.values, rng);
        fill_random(f.values, rng);
        const double lhs = dot(fbp(s, grid).values, f.values);
        const double rhs = dot(s.values, fbp_adjoint(f, g).values);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}
