#include "ctdl/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctdl {

namespace {

struct Ellipse {
    double value;    // additive intensity
    double a, b;     // semi-axes, normalized to [-1, 1] coordinates
    double x0, y0;   // center
    double phi_deg;  // rotation
};

// Modified Shepp-Logan intensities. The tilted pair and the two small bottom
// ellipses are mirrored with matched axes so the phantom is exactly symmetric
// about the vertical axis (flip augmentation treats it as a fixed point).
const Ellipse kSheppLogan[] = {
    {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.20, 0.1350, 0.3600, 0.22, 0.0000, -18.0},
    {-0.20, 0.1350, 0.3600, -0.22, 0.0000, 18.0},
    {0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.10, 0.0230, 0.0460, -0.06, -0.6050, 0.0},
    {0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
    {0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
};

bool inside(const Ellipse& e, double x, double y) {
    const double phi = e.phi_deg * M_PI / 180.0;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double xr = (x - e.x0) * c + (y - e.y0) * s;
    const double yr = -(x - e.x0) * s + (y - e.y0) * c;
    return xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0;
}

// Accumulates ellipses on normalized [-1, 1] coordinates (y up).
Image rasterize(const ImageGrid& grid, const Ellipse* ellipses, std::size_t count, ImageRole role) {
    Image img(grid, role);
    const double hx = grid.half_width_mm();
    const double hy = grid.half_height_mm();
    const double px = grid.pixel_size_mm;
    for (int r = 0; r < grid.ny; ++r) {
        const double y = ((r - 0.5 * (grid.ny - 1)) * px) / hy;
        for (int c = 0; c < grid.nx; ++c) {
            const double x = ((c - 0.5 * (grid.nx - 1)) * px) / hx;
            double v = 0.0;
            for (std::size_t i = 0; i < count; ++i)
                if (inside(ellipses[i], x, y)) v += ellipses[i].value;
            img.at(r, c) = v;
        }
    }
    return img;
}

} // namespace

Image shepp_logan(const ImageGrid& grid) {
    validate(grid);
    Image img = rasterize(grid, kSheppLogan, std::size(kSheppLogan), ImageRole::GroundTruth);
    for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
    return img;
}

Image disc_phantom(const ImageGrid& grid, double radius_mm, double value) {
    validate(grid);
    Image img(grid, ImageRole::GroundTruth);
    const double px = grid.pixel_size_mm;
    for (int r = 0; r < grid.ny; ++r) {
        const double y = (r - 0.5 * (grid.ny - 1)) * px;
        for (int c = 0; c < grid.nx; ++c) {
            const double x = (c - 0.5 * (grid.nx - 1)) * px;
            if (x * x + y * y <= radius_mm * radius_mm) img.at(r, c) = value;
        }
    }
    return img;
}

Image random_ellipse_phantom(const ImageGrid& grid, std::mt19937_64& rng, int n_ellipses) {
    validate(grid);
    if (n_ellipses < 1)
        throw std::invalid_argument("random_ellipse_phantom: n_ellipses must be >= 1");

    const Ellipse body{0.2, 0.75, 0.9, 0.0, 0.0, 0.0};
    std::vector<Ellipse> inserts;
    inserts.reserve(n_ellipses);
    std::uniform_real_distribution<double> center(-0.5, 0.5);
    std::uniform_real_distribution<double> axis(0.05, 0.3);
    std::uniform_real_distribution<double> angle(0.0, 180.0);
    std::uniform_real_distribution<double> intensity(-0.3, 0.5);
    for (int i = 0; i < n_ellipses; ++i) {
        Ellipse e;
        e.x0 = center(rng);
        e.y0 = center(rng);
        e.a = axis(rng);
        e.b = axis(rng);
        e.phi_deg = angle(rng);
        e.value = intensity(rng);
        inserts.push_back(e);
    }

    Image img(grid, ImageRole::GroundTruth);
    const double hx = grid.half_width_mm();
    const double hy = grid.half_height_mm();
    const double px = grid.pixel_size_mm;
    for (int r = 0; r < grid.ny; ++r) {
        const double y = ((r - 0.5 * (grid.ny - 1)) * px) / hy;
        for (int c = 0; c < grid.nx; ++c) {
            const double x = ((c - 0.5 * (grid.nx - 1)) * px) / hx;
            if (!inside(body, x, y)) continue;
            double v = body.value;
            for (const auto& e : inserts)
                if (inside(e, x, y)) v += e.value;
            img.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

Image flip_vertical_axis(const Image& img) {
    Image out(img.grid, img.role);
    for (int r = 0; r < img.grid.ny; ++r)
        for (int c = 0; c < img.grid.nx; ++c)
            out.at(r, c) = img.at(r, img.grid.nx - 1 - c);
    return out;
}

} // namespace ctdl
