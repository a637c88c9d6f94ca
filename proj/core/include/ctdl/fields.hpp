#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctdl/geometry.hpp"

namespace ctdl {

enum class ImageRole { GroundTruth, Fbp, Noise, Cupping, Generic };

/// Image-domain scalar field (attenuation, mm^-1), row-major ny x nx.
struct Image {
    ImageGrid grid;
    ImageRole role = ImageRole::Generic;
    std::vector<double> values;

    Image() = default;
    Image(const ImageGrid& g, ImageRole r = ImageRole::Generic)
        : grid(g), role(r), values(g.size(), 0.0) {}

    double& at(int row, int col) { return values[std::size_t(row) * grid.nx + col]; }
    double at(int row, int col) const { return values[std::size_t(row) * grid.nx + col]; }
};

/// Projection-domain scalar field (line integrals), row-major n_views x n_dets.
struct Sinogram {
    FanBeamGeometry geom;
    std::vector<double> values;

    Sinogram() = default;
    explicit Sinogram(const FanBeamGeometry& g) : geom(g), values(g.size(), 0.0) {}

    double& at(int view, int det) { return values[std::size_t(view) * geom.n_dets + det]; }
    double at(int view, int det) const { return values[std::size_t(view) * geom.n_dets + det]; }
};

inline void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

} // namespace ctdl
