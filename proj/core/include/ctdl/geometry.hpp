#pragma once

#include <cstdint>
#include <vector>

namespace ctdl {

/// Reconstruction lattice. Pixels are square, the grid is centered on the
/// rotation isocenter. Row index runs along +y, column index along +x.
struct ImageGrid {
    int nx = 0;
    int ny = 0;
    double pixel_size_mm = 0.0;

    double half_width_mm() const { return 0.5 * nx * pixel_size_mm; }
    double half_height_mm() const { return 0.5 * ny * pixel_size_mm; }
    /// Radius of the largest centered disc fully inside the grid.
    double inscribed_radius_mm() const;
    std::size_t size() const { return std::size_t(nx) * ny; }
    bool operator==(const ImageGrid&) const = default;
};

/// Flat equispaced fan-beam scanner. The source rotates on a circle of
/// radius sod_mm; the detector array is perpendicular to the central ray
/// at distance sdd_mm from the source. Detector k sits at lateral offset
/// (k - (n_dets-1)/2) * det_pitch_mm.
struct FanBeamGeometry {
    int n_views = 0;
    double angle_start_rad = 0.0;
    double angle_extent_rad = 0.0; // half-open [start, start+extent)
    int n_dets = 0;
    double det_pitch_mm = 0.0;
    double sod_mm = 0.0;
    double sdd_mm = 0.0;

    double view_angle(int i) const { return angle_start_rad + angle_extent_rad * i / n_views; }
    double det_u(int k) const { return (k - 0.5 * (n_dets - 1)) * det_pitch_mm; }
    double half_fan_angle_rad() const;
    /// Radius of the field of view swept by the full detector.
    double fov_radius_mm() const;
    std::size_t size() const { return std::size_t(n_views) * n_dets; }
    bool operator==(const FanBeamGeometry&) const = default;
};

/// Binary detector-domain truncation mask. The kept span is contiguous,
/// centered, and identical in every view.
struct ProjectionMask {
    int n_views = 0;
    int n_dets = 0;
    int kept = 0;       // number of kept detectors per view
    int first_kept = 0; // index of the first kept detector
    std::vector<std::uint8_t> values; // n_views * n_dets, row-major

    bool at(int view, int det) const { return values[std::size_t(view) * n_dets + det] != 0; }
    /// Half-width in mm of the kept detector span.
    double kept_half_width_mm(const FanBeamGeometry& geom) const;
};

/// Binary image-domain region-of-interest mask: a centered disc.
struct ImageMask {
    int nx = 0;
    int ny = 0;
    double radius_mm = 0.0;
    std::vector<std::uint8_t> values; // ny * nx, row-major

    bool at(int row, int col) const { return values[std::size_t(row) * nx + col] != 0; }
    std::size_t count() const;
};

void validate(const ImageGrid& grid);
void validate(const FanBeamGeometry& geom);

/// Reference scan: 720 views over [0, 2pi), 1440 detectors at 1 mm pitch,
/// sod 1000 mm, sdd 1500 mm.
FanBeamGeometry standard_geometry();

/// Shrinks the reference scan by `scale`, rounding view/detector counts and
/// rescaling the pitch so the half fan angle is preserved.
FanBeamGeometry scaled_geometry(double scale);

/// Keeps round(n_dets*(1-ratio)) centered detectors, adjusted down by one
/// if the parity differs from n_dets.
ProjectionMask truncation_mask(const FanBeamGeometry& geom, double ratio);

/// Disc of radius mu = sod*sin(atan(w/sdd)), w the kept half-width of `mask`.
/// A pixel is inside iff its center is strictly closer than mu to the isocenter.
ImageMask roi_mask(const ImageGrid& grid, const FanBeamGeometry& geom, const ProjectionMask& mask);

/// All-ones image mask (full region).
ImageMask full_image_mask(const ImageGrid& grid);

} // namespace ctdl
