#include "ctdl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctdl {

double ImageGrid::inscribed_radius_mm() const {
    return 0.5 * std::min(nx, ny) * pixel_size_mm;
}

double FanBeamGeometry::half_fan_angle_rad() const {
    return std::atan(0.5 * n_dets * det_pitch_mm / sdd_mm);
}

double FanBeamGeometry::fov_radius_mm() const {
    return sod_mm * std::sin(half_fan_angle_rad());
}

double ProjectionMask::kept_half_width_mm(const FanBeamGeometry& geom) const {
    return 0.5 * kept * geom.det_pitch_mm;
}

std::size_t ImageMask::count() const {
    return std::size_t(std::count(values.begin(), values.end(), std::uint8_t(1)));
}

void validate(const ImageGrid& grid) {
    if (grid.nx < 8 || grid.ny < 8)
        throw std::invalid_argument("ImageGrid: nx and ny must be >= 8");
    if (!(grid.pixel_size_mm > 0.0))
        throw std::invalid_argument("ImageGrid: pixel_size_mm must be positive");
}

void validate(const FanBeamGeometry& geom) {
    if (geom.n_views < 1)
        throw std::invalid_argument("FanBeamGeometry: n_views must be >= 1");
    if (geom.n_dets < 2)
        throw std::invalid_argument("FanBeamGeometry: n_dets must be >= 2");
    if (!(geom.det_pitch_mm > 0.0))
        throw std::invalid_argument("FanBeamGeometry: det_pitch_mm must be positive");
    if (!(geom.sdd_mm > geom.sod_mm && geom.sod_mm > 0.0))
        throw std::invalid_argument("FanBeamGeometry: require sdd > sod > 0");
    if (!(geom.angle_extent_rad > 0.0))
        throw std::invalid_argument("FanBeamGeometry: angle_extent_rad must be positive");
}

FanBeamGeometry standard_geometry() {
    FanBeamGeometry g;
    g.n_views = 720;
    g.angle_start_rad = 0.0;
    g.angle_extent_rad = 2.0 * M_PI;
    g.n_dets = 1440;
    g.det_pitch_mm = 1.0;
    g.sod_mm = 1000.0;
    g.sdd_mm = 1500.0;
    validate(g);
    return g;
}

FanBeamGeometry scaled_geometry(double scale) {
    if (!(scale > 0.0) || scale > 1.0)
        throw std::invalid_argument("scaled_geometry: scale must be in (0, 1]");
    FanBeamGeometry g = standard_geometry();
    const double half_fan = g.half_fan_angle_rad();
    const int views = int(std::lround(g.n_views * scale));
    const int dets = int(std::lround(g.n_dets * scale));
    if (views < 8)
        throw std::invalid_argument("scaled_geometry: scale leaves fewer than 8 views");
    g.n_views = views;
    g.n_dets = dets;
    g.det_pitch_mm = 2.0 * g.sdd_mm * std::tan(half_fan) / dets;
    validate(g);
    return g;
}

ProjectionMask truncation_mask(const FanBeamGeometry& geom, double ratio) {
    validate(geom);
    if (!(ratio >= 0.0) || ratio >= 1.0)
        throw std::invalid_argument("truncation_mask: ratio must be in [0, 1)");
    int kept = int(std::floor(geom.n_dets * (1.0 - ratio) + 0.5));
    if ((kept & 1) != (geom.n_dets & 1))
        kept -= 1;
    if (kept < 2)
        throw std::invalid_argument("truncation_mask: kept detector span degenerate");

    ProjectionMask m;
    m.n_views = geom.n_views;
    m.n_dets = geom.n_dets;
    m.kept = kept;
    m.first_kept = (geom.n_dets - kept) / 2;
    m.values.assign(std::size_t(m.n_views) * m.n_dets, 0);
    for (int v = 0; v < m.n_views; ++v) {
        auto* row = m.values.data() + std::size_t(v) * m.n_dets;
        std::fill(row + m.first_kept, row + m.first_kept + kept, std::uint8_t(1));
    }
    return m;
}

ImageMask roi_mask(const ImageGrid& grid, const FanBeamGeometry& geom, const ProjectionMask& mask) {
    validate(grid);
    validate(geom);
    if (mask.n_views != geom.n_views || mask.n_dets != geom.n_dets)
        throw std::invalid_argument("roi_mask: mask does not match geometry");
    const double w = mask.kept_half_width_mm(geom);
    const double mu = geom.sod_mm * std::sin(std::atan(w / geom.sdd_mm));

    ImageMask im;
    im.nx = grid.nx;
    im.ny = grid.ny;
    im.radius_mm = mu;
    im.values.assign(grid.size(), 0);
    const double px = grid.pixel_size_mm;
    for (int r = 0; r < grid.ny; ++r) {
        const double y = (r - 0.5 * (grid.ny - 1)) * px;
        for (int c = 0; c < grid.nx; ++c) {
            const double x = (c - 0.5 * (grid.nx - 1)) * px;
            if (std::hypot(x, y) < mu)
                im.values[std::size_t(r) * grid.nx + c] = 1;
        }
    }
    return im;
}

ImageMask full_image_mask(const ImageGrid& grid) {
    validate(grid);
    ImageMask im;
    im.nx = grid.nx;
    im.ny = grid.ny;
    im.radius_mm = std::hypot(grid.half_width_mm(), grid.half_height_mm());
    im.values.assign(grid.size(), 1);
    return im;
}

} // namespace ctdl
