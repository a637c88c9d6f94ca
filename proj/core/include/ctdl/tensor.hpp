#pragma once

#include <stdexcept>
#include <vector>

namespace ctdl {

/// Dense NCHW tensor.
template <typename T>
struct TensorT {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    TensorT() = default;
    TensorT(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(std::size_t(n_) * c_ * h_ * w_, T(0)) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
            throw std::invalid_argument("Tensor: dims must be positive");
    }

    std::size_t size() const { return v.size(); }
    std::size_t idx(int b, int ch, int y, int x) const {
        return ((std::size_t(b) * c + ch) * h + y) * w + x;
    }
    T& at(int b, int ch, int y, int x) { return v[idx(b, ch, y, x)]; }
    T at(int b, int ch, int y, int x) const { return v[idx(b, ch, y, x)]; }
    bool same_shape(const TensorT& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

using Tensor = TensorT<double>;

} // namespace ctdl
