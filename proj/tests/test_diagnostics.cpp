#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include <doctest.h>

#include "ctdl/diagnostics.hpp"
#include "ctdl/fft.hpp"

using namespace ctdl;

namespace {

// Real signal with exactly the requested DFT support (conjugate-symmetric
// spectrum). Returns the nonzero-bin count actually placed.
std::vector<double> sparse_spectrum_signal(int n, int k, std::mt19937_64& rng, int* support) {
    std::vector<std::complex<double>> spec(std::size_t(n), 0.0);
    std::uniform_real_distribution<double> amp(0.5, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::vector<int> bins;
    for (int i = 0; i < n; ++i) bins.push_back(i);
    std::shuffle(bins.begin(), bins.end(), rng);
    int placed = 0;
    for (int b : bins) {
        if (placed >= k) break;
        if (std::abs(spec[std::size_t(b)]) > 0.0) continue;
        if (b == 0 || 2 * b == n) {
            spec[std::size_t(b)] = amp(rng);
            placed += 1;
        } else {
            if (placed + 2 > k) continue;
            const std::complex<double> c = std::polar(amp(rng), phase(rng));
            spec[std::size_t(b)] = c;
            spec[std::size_t(n - b)] = std::conj(c);
            placed += 2;
        }
    }
    *support = placed;
    fft(spec, true);
    std::vector<double> out(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) out[std::size_t(i)] = spec[std::size_t(i)].real();
    return out;
}

} // namespace

TEST_CASE("hankel lifting uses wrap-around indexing") {
    const HankelMatrix h = hankel({1, 2, 3, 4}, 2);
    REQUIRE(h.m.rows() == 4);
    REQUIRE(h.m.cols() == 2);
    CHECK(h.m(0, 0) == 1);
    CHECK(h.m(0, 1) == 2);
    CHECK(h.m(1, 0) == 2);
    CHECK(h.m(1, 1) == 3);
    CHECK(h.m(2, 0) == 3);
    CHECK(h.m(2, 1) == 4);
    CHECK(h.m(3, 0) == 4);
    CHECK(h.m(3, 1) == 1); // wraps

    CHECK_THROWS_AS(hankel({1, 2, 3}, 0), std::invalid_argument);
    CHECK_THROWS_AS(hankel({1, 2, 3}, 4), std::invalid_argument);
}

TEST_CASE("hankel rank counts Fourier support") {
    SUBCASE("zero signal") {
        CHECK(hankel_rank(std::vector<double>(8, 0.0), 8) == 0);
        CHECK(dft_support_count(std::vector<double>(8, 0.0)) == 0);
    }
    SUBCASE("constant signal has rank 1 for any d") {
        for (int d : {1, 3, 8}) CHECK(hankel_rank(std::vector<double>(8, 3.0), d) == 1);
    }
    SUBCASE("single cosine occupies two bins") {
        std::vector<double> x(8);
        for (int k = 0; k < 8; ++k) x[std::size_t(k)] = std::cos(2.0 * M_PI * k / 8.0);
        CHECK(hankel_rank(x, 8) == 2);
        CHECK(dft_support_count(x) == 2);
    }
    SUBCASE("three exponentials give rank 3") {
        // bins 0, 5, 27 = conj(5) plus nothing else -> support {0, 5, 27}
        const int n = 32;
        std::vector<double> x(n);
        for (int k = 0; k < n; ++k)
            x[std::size_t(k)] = 1.5 + 2.0 * std::cos(2.0 * M_PI * 5.0 * k / n + 0.3);
        CHECK(hankel_rank(x, n) == 3);
        CHECK(dft_support_count(x) == 3);
    }
    SUBCASE("white noise is full rank") {
        std::mt19937_64 rng(77);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> x(32);
        for (auto& v : x) v = gauss(rng);
        CHECK(hankel_rank(x, 32) == 32);
    }
    SUBCASE("rank equals sparse DFT support, 20 random trials") {
        std::mt19937_64 rng(123);
        std::uniform_int_distribution<int> pick_k(1, 16);
        for (int trial = 0; trial < 20; ++trial) {
            int support = 0;
            const auto x = sparse_spectrum_signal(32, pick_k(rng), rng, &support);
            REQUIRE(support >= 1);
            CHECK(hankel_rank(x, 32) == support);
            CHECK(dft_support_count(x) == support);
        }
    }
}

TEST_CASE("framelet identity holds with full SVD bases") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x(24);
        for (auto& v : x) v = u(rng);
        const FrameletCheck chk = framelet_identity_check(x, 12);
        CHECK(chk.max_abs_error < 1e-10);
        CHECK(chk.spectral_error < 1e-10);
    }
    CHECK(framelet_identity_check(std::vector<double>(16, 0.0), 8).max_abs_error == 0.0);
}

TEST_CASE("rank-truncated bases satisfy the Eckart-Young bound") {
    std::mt19937_64 rng(56);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(24);
    for (auto& v : x) v = u(rng);
    const int d = 12;
    const HankelMatrix h = hankel(x, d);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h.m);
    const auto& s = svd.singularValues();
    for (int r : {3, 6, 10}) {
        const FrameletCheck chk = framelet_identity_check(x, d, r);
        const double sigma_next = s(r);
        // spectral norm of the discarded block is exactly sigma_{r+1}
        CHECK(chk.spectral_error == doctest::Approx(sigma_next).epsilon(1e-8));
        CHECK(chk.max_abs_error <= sigma_next + 1e-8);
    }
}

TEST_CASE("singular spectrum is normalized and non-increasing") {
    SUBCASE("constant channel") {
        const auto spec = singular_spectrum({std::vector<double>(16, 2.0)}, 16);
        REQUIRE(spec.size() == 16);
        CHECK(spec[0] == doctest::Approx(1.0));
        for (std::size_t i = 1; i < spec.size(); ++i) CHECK(spec[i] == doctest::Approx(0.0));
    }
    SUBCASE("random channels") {
        std::mt19937_64 rng(57);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<std::vector<double>> chans(3, std::vector<double>(16));
        for (auto& ch : chans)
            for (auto& v : ch) v = u(rng);
        const auto spec = singular_spectrum(chans, 16);
        CHECK(spec[0] == doctest::Approx(1.0));
        for (std::size_t i = 1; i < spec.size(); ++i) REQUIRE(spec[i] <= spec[i - 1] + 1e-12);
    }
    CHECK_THROWS_AS(singular_spectrum({}, 8), std::invalid_argument);
}

TEST_CASE("window_signal chops into disjoint full windows") {
    std::vector<double> flat(10);
    for (int i = 0; i < 10; ++i) flat[std::size_t(i)] = i;
    const auto wins = window_signal(flat, 4);
    REQUIRE(wins.size() == 2); // trailing partial window dropped
    CHECK(wins[0] == std::vector<double>({0, 1, 2, 3}));
    CHECK(wins[1] == std::vector<double>({4, 5, 6, 7}));
    CHECK_THROWS_AS(window_signal(flat, 11), std::invalid_argument);
    CHECK_THROWS_AS(window_signal(flat, 0), std::invalid_argument);
}

TEST_CASE("nmse definition and scale invariance") {
    const std::vector<double> f = {1.0, 2.0, -1.0, 0.5};
    CHECK(nmse(f, f) == 0.0);
    CHECK(nmse(f, std::vector<double>(4, 0.0)) == doctest::Approx(1.0));
    std::vector<double> twice = f;
    for (auto& v : twice) v *= 2.0;
    CHECK(nmse(f, twice) == doctest::Approx(1.0));

    std::vector<double> noisy = {1.1, 1.9, -1.2, 0.6};
    std::vector<double> fa = f, na = noisy;
    for (auto& v : fa) v *= -3.0;
    for (auto& v : na) v *= -3.0;
    CHECK(nmse(fa, na) == doctest::Approx(nmse(f, noisy)).epsilon(1e-12));

    CHECK_THROWS_AS(nmse(std::vector<double>(4, 0.0), f), std::invalid_argument);
    CHECK_THROWS_AS(nmse(f, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("psnr follows the stated N*M convention") {
    // 2x2 all-ones reference, single error of 0.5: 20*log10(4 * 1 / 0.5)
    const std::vector<double> f = {1.0, 1.0, 1.0, 1.0};
    const std::vector<double> g = {0.5, 1.0, 1.0, 1.0};
    CHECK(psnr(f, g, 2, 2) == doctest::Approx(20.0 * std::log10(8.0)).epsilon(1e-9));
    CHECK(psnr(f, g, 2, 2) == doctest::Approx(18.0618).epsilon(1e-4));
    // standard convention uses sqrt(N*M)
    CHECK(psnr(f, g, 2, 2, false) == doctest::Approx(20.0 * std::log10(4.0)).epsilon(1e-9));

    // halving the error norm adds exactly 20*log10(2)
    const std::vector<double> g2 = {0.75, 1.0, 1.0, 1.0};
    CHECK(psnr(f, g2, 2, 2) - psnr(f, g, 2, 2) ==
          doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));

    CHECK(std::isinf(psnr(f, f, 2, 2)));

    // strictly decreasing under growing noise
    std::mt19937_64 rng(58);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> base(64), dir(64);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (auto& v : base) v = u(rng);
    for (auto& v : dir) v = gauss(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double amp : {0.01, 0.02, 0.05, 0.1, 0.5}) {
        std::vector<double> noisy = base;
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += amp * dir[i];
        const double v = psnr(base, noisy, 8, 8);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("global ssim behaves like the closed form") {
    const std::vector<double> f = {0.1, 0.4, 0.9, 0.3};
    CHECK(ssim(f, f, 1.0) == doctest::Approx(1.0));

    // mean-preserving sign flip about the mean: covariance negative
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= double(f.size());
    std::vector<double> flipped(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) flipped[i] = -f[i] + 2.0 * mean;
    CHECK(ssim(f, flipped, 1.0) < 0.0);

    // bounded on random pairs
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(32), b(32);
        for (auto& v : a) v = u(rng);
        for (auto& v : b) v = u(rng);
        const double s = ssim(a, b, 1.0);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }

    CHECK_THROWS_AS(ssim(f, f, 0.0), std::invalid_argument);
    const std::vector<std::uint8_t> empty_mask(4, 0);
    CHECK_THROWS_AS(ssim(f, f, 1.0, 0.01, 0.03, &empty_mask), std::invalid_argument);
}

TEST_CASE("windowed ssim averages 8x8 blocks") {
    const ImageGrid grid{16, 16, 1.0};
    Image a(grid), b(grid);
    std::mt19937_64 rng(60);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : a.values) v = u(rng);
    b = a;
    CHECK(ssim_windowed(a, b, 1.0) == doctest::Approx(1.0));
    for (auto& v : b.values) v = u(rng);
    const double s = ssim_windowed(a, b, 1.0);
    CHECK(s < 1.0);
    CHECK(s >= -1.0);
}

TEST_CASE("metrics report serializes the CSV schema") {
    const ImageGrid grid{16, 16, 1.0};
    Image f(grid), g(grid);
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        f.values[i] = double(i % 7) / 7.0 + 0.1;
        g.values[i] = f.values[i] + 0.01;
    }
    const MetricsReport rep = evaluate("s1", "full", f, g);
    CHECK(MetricsReport::csv_header() ==
          "sample_id,region,nmse,psnr_db,ssim,psnr_area_factor,windowed_ssim");
    const std::string row = rep.csv_row();
    CHECK(row.substr(0, 8) == "s1,full,");
    CHECK(rep.nmse == doctest::Approx(nmse(f.values, g.values)));
    CHECK(rep.nmse > 0.0);
    CHECK(rep.psnr_area_factor);
}
