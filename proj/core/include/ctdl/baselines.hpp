#pragma once

#include "ctdl/fields.hpp"

namespace ctdl {

/// Fills the truncated detector region of each view by mirroring the
/// boundary-adjacent measured values under a cosine rolloff that reaches
/// zero at the detector array edge. Measured values are untouched.
Sinogram extrapolate_sinogram(const Sinogram& p, const ProjectionMask& T);

struct TvConfig {
    double lambda = 1e-3; // regularization weight
    int n_iters = 100;
    double step = 1e-4;   // gradient step size
    double epsilon = 1e-6; // Charbonnier smoothing constant
};

struct TvResult {
    Image image;
    bool converged = true;           // false when the objective diverged
    std::vector<double> objective;   // per-iteration value
    std::vector<double> data_term;   // per-iteration 0.5*||T(Pf-p)||^2
};

/// Gradient descent on 0.5*||T(Pf - p)||^2 + lambda * TV_eps(f), initialized
/// from fbp(extrapolate_sinogram(p, T)), with a non-negativity projection
/// each iteration. Ten consecutive objective increases abort with the
/// partial result flagged.
TvResult tv_reconstruct(const Sinogram& p, const ProjectionMask& T, const ImageGrid& grid,
                        const TvConfig& cfg);

} // namespace ctdl
