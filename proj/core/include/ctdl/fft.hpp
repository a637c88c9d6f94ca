#pragma once

#include <complex>
#include <vector>

namespace ctdl {

/// In-place radix-2 FFT. n must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

/// Dense DFT of a real signal (any length). Used by the rank diagnostics
/// where n is small.
std::vector<std::complex<double>> dft(const std::vector<double>& x);

} // namespace ctdl
