#include <complex>
#include <random>
#include <vector>

#include <doctest.h>

#include "ctdl/fft.hpp"

using namespace ctdl;

TEST_CASE("next_pow2") {
    CHECK(next_pow2(1) == 1);
    CHECK(next_pow2(2) == 2);
    CHECK(next_pow2(3) == 4);
    CHECK(next_pow2(1440) == 2048);
    CHECK(next_pow2(2048) == 2048);
}

TEST_CASE("fft matches the naive dft and inverts exactly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(16);
    for (auto& v : x) v = u(rng);

    std::vector<std::complex<double>> a(x.begin(), x.end());
    fft(a, false);
    const auto oracle = dft(x); // independent O(n^2) evaluation
    REQUIRE(oracle.size() == a.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(std::abs(a[k] - oracle[k]) < 1e-12);

    fft(a, true);
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(std::abs(a[k] - std::complex<double>(x[k])) < 1e-13);
}

TEST_CASE("fft of an impulse is flat") {
    std::vector<std::complex<double>> a(8, 0.0);
    a[0] = 1.0;
    fft(a, false);
    for (const auto& v : a) CHECK(std::abs(v - 1.0) < 1e-14);
}

TEST_CASE("fft rejects non-power-of-two lengths") {
    std::vector<std::complex<double>> a(6, 0.0);
    CHECK_THROWS_AS(fft(a, false), std::invalid_argument);
}
