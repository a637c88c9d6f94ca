#include "ctdl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctdl/projector.hpp"

namespace ctdl {

Sinogram extrapolate_sinogram(const Sinogram& p, const ProjectionMask& T) {
    if (T.n_views != p.geom.n_views || T.n_dets != p.geom.n_dets)
        throw std::invalid_argument("extrapolate_sinogram: mask mismatch");
    if (T.kept < 1) throw std::invalid_argument("extrapolate_sinogram: empty kept span");

    const int n = p.geom.n_dets;
    const int a = T.first_kept;      // first kept detector
    const int b = a + T.kept;        // one past the last kept detector
    const int w = std::min(5, T.kept - 1); // inward window for the slope estimate
    Sinogram out = p;
    for (int v = 0; v < p.geom.n_views; ++v) {
        double* row = out.values.data() + std::size_t(v) * n;
        const double* in = p.values.data() + std::size_t(v) * n;
        // Continue the boundary value to zero over the distance implied by the
        // local inward slope (linear decay estimate), shaped as a raised
        // cosine. A non-decaying boundary falls back to the full side, which
        // always ends with an exact zero at the detector edge.
        auto extend = [&](int first_k, int dir, int side_len, int bidx, int step_in) {
            if (side_len < 1) return;
            const double pb = in[bidx];
            int len = std::max(side_len - 1, 1);
            if (w >= 1) {
                const double inner = in[bidx + step_in * w];
                if (inner > pb && pb > 0.0) {
                    const double est = pb * double(w) / (inner - pb);
                    len = std::min(len, std::max(1, int(std::ceil(est))));
                }
            }
            for (int j = 0; j < side_len; ++j) {
                const int k = first_k + dir * j;
                if (j >= len) {
                    row[k] = 0.0;
                    continue;
                }
                const double c = std::cos(0.5 * M_PI * double(j) / double(len));
                row[k] = pb * c * c;
            }
        };
        extend(a - 1, -1, a, a, +1);
        extend(b, +1, n - b, b - 1, -1);
    }
    return out;
}

namespace {

double tv_value(const Image& f, double eps) {
    const int nx = f.grid.nx, ny = f.grid.ny;
    double total = 0.0;
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < nx; ++c) {
            const double dx = c + 1 < nx ? f.at(r, c + 1) - f.at(r, c) : 0.0;
            const double dy = r + 1 < ny ? f.at(r + 1, c) - f.at(r, c) : 0.0;
            total += std::sqrt(dx * dx + dy * dy + eps * eps);
        }
    return total;
}

// Gradient of the Charbonnier-smoothed TV with forward differences.
Image tv_gradient(const Image& f, double eps) {
    const int nx = f.grid.nx, ny = f.grid.ny;
    Image g(f.grid);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < nx; ++c) {
            const double dx = c + 1 < nx ? f.at(r, c + 1) - f.at(r, c) : 0.0;
            const double dy = r + 1 < ny ? f.at(r + 1, c) - f.at(r, c) : 0.0;
            const double w = 1.0 / std::sqrt(dx * dx + dy * dy + eps * eps);
            g.at(r, c) += -(dx + dy) * w;
            if (c + 1 < nx) g.at(r, c + 1) += dx * w;
            if (r + 1 < ny) g.at(r + 1, c) += dy * w;
        }
    return g;
}

} // namespace

TvResult tv_reconstruct(const Sinogram& p, const ProjectionMask& T, const ImageGrid& grid,
                        const TvConfig& cfg) {
    if (!(cfg.lambda >= 0.0) || cfg.n_iters < 1 || !(cfg.step > 0.0) || !(cfg.epsilon > 0.0))
        throw std::invalid_argument("tv_reconstruct: invalid configuration");

    TvResult result;
    result.image = fbp(extrapolate_sinogram(p, T), grid);
    for (auto& v : result.image.values) v = std::max(0.0, v);

    int rising = 0;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.n_iters; ++it) {
        Sinogram residual = forward_project(result.image, p.geom);
        double data = 0.0;
        for (std::size_t i = 0; i < residual.values.size(); ++i) {
            residual.values[i] = T.values[i] ? residual.values[i] - p.values[i] : 0.0;
            data += residual.values[i] * residual.values[i];
        }
        data *= 0.5;
        const double obj = data + cfg.lambda * tv_value(result.image, cfg.epsilon);
        result.data_term.push_back(data);
        result.objective.push_back(obj);

        // Divergence guards: sustained increase, blow-up past 1000x the
        // starting objective (catches step-size oscillation), or non-finite.
        if (!std::isfinite(obj) || obj > 1e3 * (result.objective.front() + 1e-12)) {
            result.converged = false;
            return result;
        }
        if (obj > prev) {
            if (++rising >= 10) {
                result.converged = false;
                return result;
            }
        } else {
            rising = 0;
        }
        prev = obj;

        const Image data_grad = back_project(residual, grid);
        const Image reg_grad = tv_gradient(result.image, cfg.epsilon);
        for (std::size_t i = 0; i < result.image.values.size(); ++i) {
            const double g = data_grad.values[i] + cfg.lambda * reg_grad.values[i];
            result.image.values[i] = std::max(0.0, result.image.values[i] - cfg.step * g);
        }
    }
    return result;
}

} // namespace ctdl
