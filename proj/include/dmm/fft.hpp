#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dmm {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace detail

// In-place iterative radix-2 FFT. sign = -1 gives the forward transform
// X[k] = sum_j x[j] exp(-2*pi*i*j*k/n); sign = +1 the unscaled inverse.
inline void fft_inplace(CVec& a, int sign) {
    const std::size_t n = a.size();
    if (!detail::is_power_of_two(n)) throw std::invalid_argument("fft: length must be power of two");
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * pi / static_cast<double>(len);
        const Complex wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            Complex w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const Complex u = a[i + k];
                const Complex v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline void ifft_inplace(CVec& a) {
    fft_inplace(a, +1);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= inv;
}

// 2-D transforms on an n x n row-major grid.
inline void fft2_inplace(CVec& a, std::size_t n, int sign) {
    if (a.size() != n * n) throw std::invalid_argument("fft2: size mismatch");
    CVec scratch(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) scratch[c] = a[r * n + c];
        fft_inplace(scratch, sign);
        for (std::size_t c = 0; c < n; ++c) a[r * n + c] = scratch[c];
    }
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < n; ++r) scratch[r] = a[r * n + c];
        fft_inplace(scratch, sign);
        for (std::size_t r = 0; r < n; ++r) a[r * n + c] = scratch[r];
    }
}

inline void ifft2_inplace(CVec& a, std::size_t n) {
    fft2_inplace(a, n, +1);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= inv;
}

// Circular convolution of two real n x n grids: out[m] = sum_j f[j] g[m - j]
// with periodic index arithmetic. No quadrature weight is applied here.
inline std::vector<double> circular_convolve_2d(const std::vector<double>& f,
                                                const std::vector<double>& g, std::size_t n) {
    if (f.size() != n * n || g.size() != n * n)
        throw std::invalid_argument("circular_convolve_2d: size mismatch");
    CVec fa(n * n), ga(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        fa[i] = Complex(f[i], 0.0);
        ga[i] = Complex(g[i], 0.0);
    }
    fft2_inplace(fa, n, -1);
    fft2_inplace(ga, n, -1);
    for (std::size_t i = 0; i < n * n; ++i) fa[i] *= ga[i];
    ifft2_inplace(fa, n);
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n * n; ++i) out[i] = fa[i].real();
    return out;
}

}  // namespace dmm
