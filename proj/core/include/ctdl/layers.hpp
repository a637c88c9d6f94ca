#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ctdl/tensor.hpp"

namespace ctdl {

// Functional layer kernels. Weights for conv are (cout, cin, k, k) tensors,
// biases are length-cout vectors. All backward passes accumulate into the
// provided gradient buffers (callers zero them).

template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& wgt, const std::vector<T>& bias,
                    TensorT<T>& out) {
    const int k = wgt.h;
    if (k != wgt.w || (k != 1 && k != 3))
        throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3");
    if (wgt.c != x.c) throw std::invalid_argument("conv2d: input channel mismatch");
    if (bias.size() != std::size_t(wgt.n)) throw std::invalid_argument("conv2d: bias size mismatch");
    const int pad = k / 2;
    out = TensorT<T>(x.n, wgt.n, x.h, x.w);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int b = 0; b < x.n; ++b) {
        for (int co = 0; co < wgt.n; ++co) {
            for (int y = 0; y < x.h; ++y) {
                for (int xx = 0; xx < x.w; ++xx) {
                    T acc = bias[std::size_t(co)];
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int dy = 0; dy < k; ++dy) {
                            const int sy = y + dy - pad;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int dx = 0; dx < k; ++dx) {
                                const int sx = xx + dx - pad;
                                if (sx < 0 || sx >= x.w) continue;
                                acc += wgt.at(co, ci, dy, dx) * x.at(b, ci, sy, sx);
                            }
                        }
                    out.at(b, co, y, xx) = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& wgt, const TensorT<T>& gout,
                     TensorT<T>& gx, TensorT<T>& gw, std::vector<T>& gb) {
    const int k = wgt.h;
    const int pad = k / 2;
    gx = TensorT<T>(x.n, x.c, x.h, x.w);
    // input gradient: correlation with the flipped kernel, channels swapped
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int b = 0; b < x.n; ++b) {
        for (int ci = 0; ci < x.c; ++ci) {
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    T acc = T(0);
                    for (int co = 0; co < wgt.n; ++co)
                        for (int dy = 0; dy < k; ++dy) {
                            const int oy = y - dy + pad;
                            if (oy < 0 || oy >= x.h) continue;
                            for (int dx = 0; dx < k; ++dx) {
                                const int ox = xx - dx + pad;
                                if (ox < 0 || ox >= x.w) continue;
                                acc += wgt.at(co, ci, dy, dx) * gout.at(b, co, oy, ox);
                            }
                        }
                    gx.at(b, ci, y, xx) = acc;
                }
        }
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < wgt.n; ++co) {
        for (int ci = 0; ci < x.c; ++ci)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    T acc = T(0);
                    for (int b = 0; b < x.n; ++b)
                        for (int y = 0; y < x.h; ++y) {
                            const int sy = y + dy - pad;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int xx = 0; xx < x.w; ++xx) {
                                const int sx = xx + dx - pad;
                                if (sx < 0 || sx >= x.w) continue;
                                acc += gout.at(b, co, y, xx) * x.at(b, ci, sy, sx);
                            }
                        }
                    gw.at(co, ci, dy, dx) += acc;
                }
        T acc = T(0);
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) acc += gout.at(b, co, y, xx);
        gb[std::size_t(co)] += acc;
    }
}

constexpr double kBnEpsilon = 1e-5;
constexpr double kBnMomentum = 0.1;

template <typename T>
struct BnBatchStats {
    std::vector<T> mean, invstd;
};

/// Train mode normalizes over (N, H, W) per channel and updates the running
/// stats; eval mode applies the running stats.
template <typename T>
void batch_norm_forward(const TensorT<T>& x, const std::vector<T>& gamma,
                        const std::vector<T>& beta, std::vector<T>& running_mean,
                        std::vector<T>& running_var, bool train, TensorT<T>& out,
                        BnBatchStats<T>& saved) {
    if (gamma.size() != std::size_t(x.c) || beta.size() != std::size_t(x.c))
        throw std::invalid_argument("batch_norm: channel mismatch");
    const std::size_t m = std::size_t(x.n) * x.h * x.w;
    if (m == 0) throw std::invalid_argument("batch_norm: empty batch");
    out = TensorT<T>(x.n, x.c, x.h, x.w);
    saved.mean.assign(std::size_t(x.c), T(0));
    saved.invstd.assign(std::size_t(x.c), T(0));
    for (int ch = 0; ch < x.c; ++ch) {
        T mean, var;
        if (train) {
            T s = T(0);
            for (int b = 0; b < x.n; ++b)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx) s += x.at(b, ch, y, xx);
            mean = s / T(m);
            T v = T(0);
            for (int b = 0; b < x.n; ++b)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx) {
                        const T d = x.at(b, ch, y, xx) - mean;
                        v += d * d;
                    }
            var = v / T(m);
            running_mean[ch] = T(1 - kBnMomentum) * running_mean[ch] + T(kBnMomentum) * mean;
            running_var[ch] = T(1 - kBnMomentum) * running_var[ch] + T(kBnMomentum) * var;
        } else {
            mean = running_mean[ch];
            var = running_var[ch];
        }
        const T invstd = T(1) / std::sqrt(var + T(kBnEpsilon));
        saved.mean[ch] = mean;
        saved.invstd[ch] = invstd;
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx)
                    out.at(b, ch, y, xx) =
                        gamma[ch] * (x.at(b, ch, y, xx) - mean) * invstd + beta[ch];
    }
}

template <typename T>
void batch_norm_backward(const TensorT<T>& x, const std::vector<T>& gamma,
                         const BnBatchStats<T>& saved, const TensorT<T>& gout, bool train,
                         TensorT<T>& gx, std::vector<T>& ggamma, std::vector<T>& gbeta) {
    const std::size_t m = std::size_t(x.n) * x.h * x.w;
    gx = TensorT<T>(x.n, x.c, x.h, x.w);
    for (int ch = 0; ch < x.c; ++ch) {
        const T mean = saved.mean[ch];
        const T invstd = saved.invstd[ch];
        T sum_g = T(0), sum_gx = T(0);
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    const T g = gout.at(b, ch, y, xx);
                    const T xhat = (x.at(b, ch, y, xx) - mean) * invstd;
                    sum_g += g;
                    sum_gx += g * xhat;
                }
        ggamma[ch] += sum_gx;
        gbeta[ch] += sum_g;
        for (int b = 0; b < x.n; ++b)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    const T g = gout.at(b, ch, y, xx);
                    if (train) {
                        const T xhat = (x.at(b, ch, y, xx) - mean) * invstd;
                        gx.at(b, ch, y, xx) =
                            gamma[ch] * invstd * (g - sum_g / T(m) - xhat * sum_gx / T(m));
                    } else {
                        gx.at(b, ch, y, xx) = gamma[ch] * invstd * g;
                    }
                }
    }
}

template <typename T>
void relu_forward(const TensorT<T>& x, TensorT<T>& out) {
    out = x;
    for (auto& v : out.v) v = std::max(T(0), v);
}

template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& gout, TensorT<T>& gx) {
    gx = gout;
    for (std::size_t i = 0; i < x.v.size(); ++i)
        if (x.v[i] <= T(0)) gx.v[i] = T(0); // subgradient at 0 taken as 0
}

template <typename T>
void avg_pool2_forward(const TensorT<T>& x, TensorT<T>& out) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw std::invalid_argument("avg_pool2: spatial dims must be even");
    out = TensorT<T>(x.n, x.c, x.h / 2, x.w / 2);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(b, ch, y, xx) =
                        T(0.25) * (x.at(b, ch, 2 * y, 2 * xx) + x.at(b, ch, 2 * y, 2 * xx + 1) +
                                   x.at(b, ch, 2 * y + 1, 2 * xx) +
                                   x.at(b, ch, 2 * y + 1, 2 * xx + 1));
}

template <typename T>
void avg_pool2_backward(const TensorT<T>& x, const TensorT<T>& gout, TensorT<T>& gx) {
    gx = TensorT<T>(x.n, x.c, x.h, x.w);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) {
                    const T g = T(0.25) * gout.at(b, ch, y, xx);
                    gx.at(b, ch, 2 * y, 2 * xx) = g;
                    gx.at(b, ch, 2 * y, 2 * xx + 1) = g;
                    gx.at(b, ch, 2 * y + 1, 2 * xx) = g;
                    gx.at(b, ch, 2 * y + 1, 2 * xx + 1) = g;
                }
}

/// Nearest-neighbor x2 upsampling.
template <typename T>
void unpool2_forward(const TensorT<T>& x, TensorT<T>& out) {
    out = TensorT<T>(x.n, x.c, x.h * 2, x.w * 2);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(b, ch, y, xx) = x.at(b, ch, y / 2, xx / 2);
}

template <typename T>
void unpool2_backward(const TensorT<T>& x, const TensorT<T>& gout, TensorT<T>& gx) {
    gx = TensorT<T>(x.n, x.c, x.h, x.w);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx)
                    gx.at(b, ch, y / 2, xx / 2) += gout.at(b, ch, y, xx);
}

template <typename T>
void concat_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat: spatial/batch mismatch");
    out = TensorT<T>(a.n, a.c + b.c, a.h, a.w);
    for (int bb = 0; bb < a.n; ++bb) {
        for (int ch = 0; ch < a.c; ++ch)
            for (int y = 0; y < a.h; ++y)
                for (int xx = 0; xx < a.w; ++xx) out.at(bb, ch, y, xx) = a.at(bb, ch, y, xx);
        for (int ch = 0; ch < b.c; ++ch)
            for (int y = 0; y < a.h; ++y)
                for (int xx = 0; xx < a.w; ++xx)
                    out.at(bb, a.c + ch, y, xx) = b.at(bb, ch, y, xx);
    }
}

template <typename T>
void concat_backward(int ca, int cb, const TensorT<T>& gout, TensorT<T>& ga, TensorT<T>& gb) {
    ga = TensorT<T>(gout.n, ca, gout.h, gout.w);
    gb = TensorT<T>(gout.n, cb, gout.h, gout.w);
    for (int b = 0; b < gout.n; ++b) {
        for (int ch = 0; ch < ca; ++ch)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) ga.at(b, ch, y, xx) = gout.at(b, ch, y, xx);
        for (int ch = 0; ch < cb; ++ch)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) gb.at(b, ch, y, xx) = gout.at(b, ca + ch, y, xx);
    }
}

} // namespace ctdl
