#pragma once

#include "ctdl/fields.hpp"

namespace ctdl {

enum class FilterWindow { RamLak, Hann };

/// Ray-driven line integrals: for every (view, detector) the ray from the
/// source to the detector cell center is marched with step pixel_size/2 and
/// bilinear sampling. Linear in the image.
Sinogram forward_project(const Image& img, const FanBeamGeometry& geom);

/// Exact discrete adjoint of forward_project (same rays, same weights,
/// transposed accumulation).
Image back_project(const Sinogram& sino, const ImageGrid& grid);

/// Per view: cosine weighting for the flat fan-beam detector, then Ram-Lak
/// filtering via FFT on a zero-padded circle (next power of two >= 2*n_dets).
/// The filter has an exact zero at frequency 0.
Sinogram ramp_filter(const Sinogram& sino, FilterWindow window = FilterWindow::RamLak);

/// Adjoint of ramp_filter: the (symmetric) convolution first, the cosine
/// weighting last.
Sinogram ramp_filter_adjoint(const Sinogram& sino, FilterWindow window = FilterWindow::RamLak);

/// Pixel-driven weighted fan-beam backprojection of an already filtered
/// sinogram (inverse-square distance weights, delta-beta scaling).
Image fbp_backproject(const Sinogram& filtered, const ImageGrid& grid);

/// Exact discrete adjoint of fbp_backproject: splats an image back onto the
/// detector rows with the same weights.
Sinogram fbp_backproject_adjoint(const Image& img, const FanBeamGeometry& geom);

/// Equispaced fan-beam filtered backprojection, fbp = backproject(ramp(s)).
Image fbp(const Sinogram& sino, const ImageGrid& grid, FilterWindow window = FilterWindow::RamLak);

/// Adjoint of fbp, used as the gradient of the differentiable FBP layer:
/// ramp_filter_adjoint(fbp_backproject_adjoint(g)).
Sinogram fbp_adjoint(const Image& grad_image, const FanBeamGeometry& geom,
                     FilterWindow window = FilterWindow::RamLak);

} // namespace ctdl
