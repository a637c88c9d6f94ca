#pragma once

#include <cstdint>
#include <random>

#include "ctdl/fields.hpp"

namespace ctdl {

/// 10-ellipse Shepp-Logan head phantom (modified intensities, values in
/// [0, 1], symmetric about the vertical axis), scaled to the grid.
Image shepp_logan(const ImageGrid& grid);

/// Centered disc of constant value.
Image disc_phantom(const ImageGrid& grid, double radius_mm, double value = 1.0);

/// A fixed elliptical body (intensity 0.2) with n random additive ellipses
/// clipped to the body support; values clamped to [0, 1].
Image random_ellipse_phantom(const ImageGrid& grid, std::mt19937_64& rng, int n_ellipses);

/// Mirror the image about its vertical axis (column reversal).
Image flip_vertical_axis(const Image& img);

} // namespace ctdl
