#include "ctdl/projector.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "ctdl/fft.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctdl {

namespace {

void check_pair(const ImageGrid& grid, const FanBeamGeometry& geom) {
    validate(grid);
    validate(geom);
    if (grid.inscribed_radius_mm() > geom.fov_radius_mm() * (1.0 + 1e-12))
        throw std::invalid_argument("projector: grid inscribed circle exceeds detector FOV");
}

struct Ray {
    double ax, ay;   // source
    double dx, dy;   // unit direction
    double t0, t1;   // param range clipped to the grid box
};

bool clip_ray(const ImageGrid& grid, double ax, double ay, double dx, double dy, Ray& ray) {
    const double hw = grid.half_width_mm();
    const double hh = grid.half_height_mm();
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    const double o[2] = {ax, ay};
    const double d[2] = {dx, dy};
    const double lo[2] = {-hw, -hh};
    const double hi[2] = {hw, hh};
    for (int i = 0; i < 2; ++i) {
        if (std::abs(d[i]) < 1e-300) {
            if (o[i] < lo[i] || o[i] > hi[i]) return false;
        } else {
            double ta = (lo[i] - o[i]) / d[i];
            double tb = (hi[i] - o[i]) / d[i];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
    }
    if (t1 <= t0) return false;
    ray = {ax, ay, dx, dy, t0, t1};
    return true;
}

// Visits the bilinear footprint of every sample point on the ray.
// visit(pixel_index, weight) with weight already including the step length.
template <typename F>
void march(const ImageGrid& grid, const Ray& ray, F&& visit) {
    const double step = 0.5 * grid.pixel_size_mm;
    const int m = int((ray.t1 - ray.t0) / step);
    const double inv_px = 1.0 / grid.pixel_size_mm;
    const double cx = 0.5 * (grid.nx - 1);
    const double cy = 0.5 * (grid.ny - 1);
    for (int j = 0; j < m; ++j) {
        const double t = ray.t0 + (j + 0.5) * step;
        const double x = ray.ax + t * ray.dx;
        const double y = ray.ay + t * ray.dy;
        const double gx = x * inv_px + cx;
        const double gy = y * inv_px + cy;
        const int ix = int(std::floor(gx));
        const int iy = int(std::floor(gy));
        const double fx = gx - ix;
        const double fy = gy - iy;
        const double w00 = (1.0 - fx) * (1.0 - fy) * step;
        const double w10 = fx * (1.0 - fy) * step;
        const double w01 = (1.0 - fx) * fy * step;
        const double w11 = fx * fy * step;
        const bool x0 = ix >= 0 && ix < grid.nx;
        const bool x1 = ix + 1 >= 0 && ix + 1 < grid.nx;
        const bool y0 = iy >= 0 && iy < grid.ny;
        const bool y1 = iy + 1 >= 0 && iy + 1 < grid.ny;
        if (y0) {
            const std::size_t base = std::size_t(iy) * grid.nx;
            if (x0) visit(base + ix, w00);
            if (x1) visit(base + ix + 1, w10);
        }
        if (y1) {
            const std::size_t base = std::size_t(iy + 1) * grid.nx;
            if (x0) visit(base + ix, w01);
            if (x1) visit(base + ix + 1, w11);
        }
    }
}

bool make_ray(const ImageGrid& grid, const FanBeamGeometry& geom, int view, int det, Ray& ray) {
    const double beta = geom.view_angle(view);
    const double cb = std::cos(beta);
    const double sb = std::sin(beta);
    const double ax = geom.sod_mm * cb;
    const double ay = geom.sod_mm * sb;
    const double u = geom.det_u(det);
    // detector cell center
    const double px = -(geom.sdd_mm - geom.sod_mm) * cb - u * sb;
    const double py = -(geom.sdd_mm - geom.sod_mm) * sb + u * cb;
    double dx = px - ax;
    double dy = py - ay;
    const double norm = std::hypot(dx, dy);
    dx /= norm;
    dy /= norm;
    return clip_ray(grid, ax, ay, dx, dy, ray);
}

// Shared arithmetic for the pixel-driven backprojector and its transpose.
// Returns false when the pixel projects outside the detector row.
struct PixelViewTap {
    int k0, k1;
    double w0, w1; // interpolation weights, amplitude included
};

bool pixel_view_tap(const ImageGrid& grid, const FanBeamGeometry& geom,
                    double cb, double sb, double scale, int row, int col, PixelViewTap& tap) {
    const double px = grid.pixel_size_mm;
    const double x = (col - 0.5 * (grid.nx - 1)) * px;
    const double y = (row - 0.5 * (grid.ny - 1)) * px;
    const double along = x * cb + y * sb;            // toward the source
    const double across = -x * sb + y * cb;          // detector axis
    const double L = geom.sod_mm - along;            // source distance along the central ray
    if (L <= 1e-9) return false;
    const double u = geom.sdd_mm * across / L;
    const double g = u / geom.det_pitch_mm + 0.5 * (geom.n_dets - 1);
    const int k = int(std::floor(g));
    if (k < 0 || k + 1 >= geom.n_dets) return false;
    const double f = g - k;
    const double amp = scale * geom.sod_mm * geom.sod_mm / (L * L);
    tap.k0 = k;
    tap.k1 = k + 1;
    tap.w0 = (1.0 - f) * amp;
    tap.w1 = f * amp;
    return true;
}

// Frequency response of the periodized discrete Ram-Lak kernel on a circle
// of length p (p even). The infinite Ram-Lak taps sum to zero exactly, so
// the response at frequency 0 is pinned to zero.
std::vector<double> ramp_response(std::size_t p, double du, FilterWindow window) {
    std::vector<std::complex<double>> kern(p, 0.0);
    const double inv_du2 = 1.0 / (du * du);
    kern[0] = 0.25 * inv_du2;
    for (std::size_t j = 1; j < p; j += 2) {
        const double s = std::sin(M_PI * double(j) / double(p));
        kern[j] = -inv_du2 / (double(p) * double(p) * s * s);
    }
    fft(kern, false);
    std::vector<double> h(p);
    for (std::size_t m = 0; m < p; ++m) h[m] = kern[m].real();
    h[0] = 0.0;
    if (window == FilterWindow::Hann) {
        for (std::size_t m = 1; m < p; ++m) {
            const std::size_t f = std::min(m, p - m);
            h[m] *= 0.5 * (1.0 + std::cos(2.0 * M_PI * double(f) / double(p)));
        }
    }
    return h;
}

Sinogram ramp_apply(const Sinogram& sino, FilterWindow window, bool adjoint) {
    const auto& geom = sino.geom;
    validate(geom);
    const std::size_t p = next_pow2(std::size_t(2) * geom.n_dets);
    const auto h = ramp_response(p, geom.det_pitch_mm, window);

    std::vector<double> cosw(geom.n_dets);
    for (int k = 0; k < geom.n_dets; ++k) {
        const double u = geom.det_u(k);
        cosw[k] = geom.sdd_mm / std::sqrt(geom.sdd_mm * geom.sdd_mm + u * u);
    }

    Sinogram out(geom);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int v = 0; v < geom.n_views; ++v) {
        std::vector<std::complex<double>> buf(p, 0.0);
        const double* in = sino.values.data() + std::size_t(v) * geom.n_dets;
        for (int k = 0; k < geom.n_dets; ++k)
            buf[k] = adjoint ? in[k] : in[k] * cosw[k];
        fft(buf, false);
        for (std::size_t m = 0; m < p; ++m) buf[m] *= h[m];
        fft(buf, true);
        double* o = out.values.data() + std::size_t(v) * geom.n_dets;
        for (int k = 0; k < geom.n_dets; ++k) {
            const double y = buf[k].real() * geom.det_pitch_mm;
            o[k] = adjoint ? y * cosw[k] : y;
        }
    }
    return out;
}

} // namespace

Sinogram forward_project(const Image& img, const FanBeamGeometry& geom) {
    check_pair(img.grid, geom);
    if (img.values.size() != img.grid.size())
        throw std::invalid_argument("forward_project: image size mismatch");
    Sinogram out(geom);
    const ImageGrid grid = img.grid;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int v = 0; v < geom.n_views; ++v) {
        double* row = out.values.data() + std::size_t(v) * geom.n_dets;
        for (int k = 0; k < geom.n_dets; ++k) {
            Ray ray;
            if (!make_ray(grid, geom, v, k, ray)) continue;
            double acc = 0.0;
            march(grid, ray, [&](std::size_t idx, double w) { acc += w * img.values[idx]; });
            row[k] = acc;
        }
    }
    return out;
}

Image back_project(const Sinogram& sino, const ImageGrid& grid) {
    check_pair(grid, sino.geom);
    const auto& geom = sino.geom;
    Image out(grid, ImageRole::Generic);

    // Fixed chunking keeps the reduction order independent of thread count.
    constexpr int kChunks = 16;
    const int chunks = std::min(kChunks, geom.n_views);
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(grid.size(), 0.0));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int c = 0; c < chunks; ++c) {
        const int v0 = int(std::size_t(c) * geom.n_views / chunks);
        const int v1 = int(std::size_t(c + 1) * geom.n_views / chunks);
        auto& img = partial[c];
        for (int v = v0; v < v1; ++v) {
            const double* row = sino.values.data() + std::size_t(v) * geom.n_dets;
            for (int k = 0; k < geom.n_dets; ++k) {
                const double g = row[k];
                if (g == 0.0) continue;
                Ray ray;
                if (!make_ray(grid, geom, v, k, ray)) continue;
                march(grid, ray, [&](std::size_t idx, double w) { img[idx] += w * g; });
            }
        }
    }
    for (int c = 0; c < chunks; ++c)
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += partial[c][i];
    return out;
}

Sinogram ramp_filter(const Sinogram& sino, FilterWindow window) {
    return ramp_apply(sino, window, false);
}

Sinogram ramp_filter_adjoint(const Sinogram& sino, FilterWindow window) {
    return ramp_apply(sino, window, true);
}

Image fbp_backproject(const Sinogram& filtered, const ImageGrid& grid) {
    check_pair(grid, filtered.geom);
    const auto& geom = filtered.geom;
    const double dbeta = geom.angle_extent_rad / geom.n_views;
    const double scale = dbeta * geom.sdd_mm / (2.0 * geom.sod_mm);

    std::vector<double> cb(geom.n_views), sb(geom.n_views);
    for (int v = 0; v < geom.n_views; ++v) {
        cb[v] = std::cos(geom.view_angle(v));
        sb[v] = std::sin(geom.view_angle(v));
    }

    Image out(grid, ImageRole::Fbp);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int r = 0; r < grid.ny; ++r) {
        for (int c = 0; c < grid.nx; ++c) {
            double acc = 0.0;
            for (int v = 0; v < geom.n_views; ++v) {
                PixelViewTap tap;
                if (!pixel_view_tap(grid, geom, cb[v], sb[v], scale, r, c, tap)) continue;
                const double* row = filtered.values.data() + std::size_t(v) * geom.n_dets;
                acc += tap.w0 * row[tap.k0] + tap.w1 * row[tap.k1];
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

Sinogram fbp_backproject_adjoint(const Image& img, const FanBeamGeometry& geom) {
    check_pair(img.grid, geom);
    const ImageGrid grid = img.grid;
    const double dbeta = geom.angle_extent_rad / geom.n_views;
    const double scale = dbeta * geom.sdd_mm / (2.0 * geom.sod_mm);

    Sinogram out(geom);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int v = 0; v < geom.n_views; ++v) {
        const double cb = std::cos(geom.view_angle(v));
        const double sb = std::sin(geom.view_angle(v));
        double* row = out.values.data() + std::size_t(v) * geom.n_dets;
        for (int r = 0; r < grid.ny; ++r) {
            for (int c = 0; c < grid.nx; ++c) {
                PixelViewTap tap;
                if (!pixel_view_tap(grid, geom, cb, sb, scale, r, c, tap)) continue;
                const double g = img.at(r, c);
                row[tap.k0] += tap.w0 * g;
                row[tap.k1] += tap.w1 * g;
            }
        }
    }
    return out;
}

Image fbp(const Sinogram& sino, const ImageGrid& grid, FilterWindow window) {
    return fbp_backproject(ramp_filter(sino, window), grid);
}

Sinogram fbp_adjoint(const Image& grad_image, const FanBeamGeometry& geom, FilterWindow window) {
    return ramp_filter_adjoint(fbp_backproject_adjoint(grad_image, geom), window);
}

} // namespace ctdl
