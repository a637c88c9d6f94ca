#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ctdl/fields.hpp"

namespace ctdl {

/// Wrap-around (circulant) Hankel lifting: H(i, j) = x[(i + j) mod n].
struct HankelMatrix {
    int n = 0;
    int d = 0;
    Eigen::MatrixXd m;
};

HankelMatrix hankel(const std::vector<double>& signal, int d);

/// Numerical rank: singular values above tol_factor * sigma_max. With d = n
/// this equals the number of nonzero DFT coefficients of the signal.
int hankel_rank(const std::vector<double>& signal, int d, double tol_factor = 1e-8);

/// Nonzero-DFT-bin count at the same relative threshold (the Fourier-domain
/// route to the same number).
int dft_support_count(const std::vector<double>& signal, double tol_factor = 1e-8);

/// Reconstructs H from its SVD bases (identity non-local bases, right
/// singular vectors as local bases, optionally truncated to rank r) and
/// returns the max-abs and spectral-norm reconstruction errors.
struct FrameletCheck {
    double max_abs_error = 0.0;
    double spectral_error = 0.0;
};
FrameletCheck framelet_identity_check(const std::vector<double>& signal, int d,
                                      std::optional<int> r = std::nullopt);

/// Averaged per-channel singular spectra of wrap-around Hankel liftings,
/// normalized so the first entry is 1, non-increasing.
std::vector<double> singular_spectrum(const std::vector<std::vector<double>>& channel_signals,
                                      int d);

/// Chops a flattened 2-D feature map into consecutive length-n windows.
std::vector<std::vector<double>> window_signal(const std::vector<double>& flat, int n);

// --- evaluation metrics ---

double nmse(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            const std::vector<std::uint8_t>* mask = nullptr);

/// PSNR with an N*M peak factor, 20*log10(N*M*max|f*| / ||f*-f_bar||). The
/// common sqrt(N*M) convention is available behind the flag. Identical
/// inputs report +inf.
double psnr(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            int rows, int cols, bool area_peak_factor = true);

/// Global-statistics SSIM (single mean/variance/covariance over the masked
/// region). The windowed variant (8x8 blocks, averaged) sits behind the flag.
double ssim(const std::vector<double>& f_star, const std::vector<double>& f_bar,
            double dynamic_range, double k1 = 0.01, double k2 = 0.03,
            const std::vector<std::uint8_t>* mask = nullptr);
double ssim_windowed(const Image& f_star, const Image& f_bar, double dynamic_range,
                     double k1 = 0.01, double k2 = 0.03);

struct MetricsReport {
    std::string sample_id;
    std::string region; // full / roi / body
    double nmse = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    bool psnr_area_factor = true;
    bool windowed_ssim = false;

    std::string csv_row() const;
    static std::string csv_header();
};

MetricsReport evaluate(const std::string& sample_id, const std::string& region,
                       const Image& f_star, const Image& f_bar,
                       const std::vector<std::uint8_t>* mask = nullptr);

} // namespace ctdl
