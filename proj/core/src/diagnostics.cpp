#include "ctdl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ctdl/fft.hpp"

namespace ctdl {

HankelMatrix hankel(const std::vector<double>& signal, int d) {
    const int n = int(signal.size());
    if (d < 1 || d > n) throw std::invalid_argument("hankel: require 1 <= d <= n");
    HankelMatrix h;
    h.n = n;
    h.d = d;
    h.m.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) h.m(i, j) = signal[std::size_t((i + j) % n)];
    return h;
}

int hankel_rank(const std::vector<double>& signal, int d, double tol_factor) {
    const HankelMatrix h = hankel(signal, d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h.m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double tol = tol_factor * s(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++rank;
    return rank;
}

int dft_support_count(const std::vector<double>& signal, double tol_factor) {
    const auto spectrum = dft(signal);
    double peak = 0.0;
    for (const auto& c : spectrum) peak = std::max(peak, std::abs(c));
    if (peak == 0.0) return 0;
    int count = 0;
    for (const auto& c : spectrum)
        if (std::abs(c) > tol_factor * peak) ++count;
    return count;
}

FrameletCheck framelet_identity_check(const std::vector<double>& signal, int d,
                                      std::optional<int> r) {
    const HankelMatrix h = hankel(signal, d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h.m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd v = svd.matrixV();
    if (r) {
        const int keep = std::clamp(*r, 0, int(v.cols()));
        v = v.leftCols(keep).eval();
    }
    // Non-local bases are the identity; local bases the right singular
    // vectors: the residual is H - H * V * V^T.
    const Eigen::MatrixXd residual = h.m - h.m * v * v.transpose();
    FrameletCheck out;
    out.max_abs_error = residual.size() ? residual.cwiseAbs().maxCoeff() : 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> rsvd(residual);
    out.spectral_error = rsvd.singularValues().size() ? rsvd.singularValues()(0) : 0.0;
    return out;
}

std::vector<double> singular_spectrum(const std::vector<std::vector<double>>& channel_signals,
                                      int d) {
    if (channel_signals.empty())
        throw std::invalid_argument("singular_spectrum: no channels");
    std::vector<double> mean(std::size_t(d), 0.0);
    for (const auto& signal : channel_signals) {
        const HankelMatrix h = hankel(signal, d);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(h.m);
        const auto& s = svd.singularValues();
        for (int i = 0; i < d; ++i)
            mean[std::size_t(i)] += i < s.size() ? s(i) : 0.0;
    }
    for (auto& v : mean) v /= double(channel_signals.size());
    std::sort(mean.begin(), mean.end(), std::greater<>());
    const double peak = mean[0];
    if (peak > 0.0)
        for (auto& v : mean) v /= peak;
    return mean;
}

std::vector<std::vector<double>> window_signal(const std::vector<double>& flat, int n) {
    if (n < 1) throw std::invalid_argument("window_signal: n must be positive");
    std::vector<std::vector<double>> out;
    for (std::size_t start = 0; start + std::size_t(n) <= flat.size(); start += std::size_t(n))
        out.emplace_back(flat.begin() + start, flat.begin() + start + n);
    if (out.empty()) throw std::invalid_argument("window_signal: signal shorter than window");
    return out;
}

namespace {

void check_dims(const std::vector<double>& a, const std::vector<double>& b,
                const std::vector<std::uint8_t>* mask) {
    if (a.size() != b.size()) throw std::invalid_argument("metrics: size mismatch");
    if (mask && mask->size() != a.size())
        throw std::invalid_argument("metrics: mask size mismatch");
}

} // namespace

double nmse(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            const std::vector<std::uint8_t>* mask) {
    check_dims(f_star, f_bar, mask);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f_star.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double e = f_star[i] - f_bar[i];
        num += e * e;
        den += f_star[i] * f_star[i];
    }
    if (den == 0.0) throw std::invalid_argument("nmse: reference has zero norm on mask");
    return num / den;
}

double psnr(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            int rows, int cols, bool area_peak_factor) {
    check_dims(f_star, f_bar, nullptr);
    double err2 = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < f_star.size(); ++i) {
        const double e = f_star[i] - f_bar[i];
        err2 += e * e;
        peak = std::max(peak, std::abs(f_star[i]));
    }
    if (err2 == 0.0) return std::numeric_limits<double>::infinity();
    const double factor = area_peak_factor ? double(rows) * double(cols)
                                           : std::sqrt(double(rows) * double(cols));
    return 20.0 * std::log10(factor * peak / std::sqrt(err2));
}

double ssim(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            double dynamic_range, double k1, double k2,
            const std::vector<std::uint8_t>* mask) {
    check_dims(f_star, f_bar, mask);
    if (!(dynamic_range > 0.0)) throw std::invalid_argument("ssim: dynamic range must be positive");
    double n = 0.0, ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < f_star.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        n += 1.0;
        ma += f_star[i];
        mb += f_bar[i];
    }
    if (n == 0.0) throw std::invalid_argument("ssim: empty mask");
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < f_star.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        va += (f_star[i] - ma) * (f_star[i] - ma);
        vb += (f_bar[i] - mb) * (f_bar[i] - mb);
        cov += (f_star[i] - ma) * (f_bar[i] - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
    const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
    return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double ssim_windowed(const Image& f_star, const Image& f_bar, double dynamic_range,
                     double k1, double k2) {
    if (!(f_star.grid == f_bar.grid)) throw std::invalid_argument("ssim: grid mismatch");
    constexpr int kWin = 8;
    double total = 0.0;
    int blocks = 0;
    for (int r0 = 0; r0 + kWin <= f_star.grid.ny; r0 += kWin) {
        for (int c0 = 0; c0 + kWin <= f_star.grid.nx; c0 += kWin) {
            std::vector<double> a, b;
            a.reserve(kWin * kWin);
            b.reserve(kWin * kWin);
            for (int r = r0; r < r0 + kWin; ++r)
                for (int c = c0; c < c0 + kWin; ++c) {
                    a.push_back(f_star.at(r, c));
                    b.push_back(f_bar.at(r, c));
                }
            total += ssim(a, b, dynamic_range, k1, k2);
            ++blocks;
        }
    }
    if (blocks == 0) throw std::invalid_argument("ssim_windowed: image smaller than window");
    return total / blocks;
}

std::string MetricsReport::csv_header() {
    return "sample_id,region,nmse,psnr_db,ssim,psnr_area_factor,windowed_ssim";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os.precision(9);
    os << sample_id << ',' << region << ',' << nmse << ',' << psnr_db << ',' << ssim << ','
       << (psnr_area_factor ? 1 : 0) << ',' << (windowed_ssim ? 1 : 0);
    return os.str();
}

MetricsReport evaluate(const std::string& sample_id, const std::string& region,
                       const Image& f_star, const Image& f_bar,
                       const std::vector<std::uint8_t>* mask) {
    if (!(f_star.grid == f_bar.grid)) throw std::invalid_argument("evaluate: grid mismatch");
    double peak = 0.0;
    for (double v : f_star.values) peak = std::max(peak, std::abs(v));
    MetricsReport rep;
    rep.sample_id = sample_id;
    rep.region = region;
    rep.nmse = nmse(f_star.values, f_bar.values, mask);
    rep.psnr_db = psnr(f_star.values, f_bar.values, f_star.grid.ny, f_star.grid.nx, true);
    rep.ssim = ssim(f_star.values, f_bar.values, peak > 0.0 ? peak : 1.0, 0.01, 0.03, mask);
    return rep;
}

} // namespace ctdl
