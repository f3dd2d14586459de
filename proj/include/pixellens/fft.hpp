#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

// Minimal iterative radix-2 FFT, double precision, power-of-two sizes only.
// Self-contained so transforms are bitwise reproducible run to run; callers
// pad to a power of two.

namespace pixellens::fftops {

inline int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place Cooley-Tukey. Inverse includes the 1/n normalization.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= scale;
    }
}

// Row-column 2-D transform of a row-major w x h grid.
inline void fft_2d(std::vector<std::complex<double>>& grid, int w, int h, bool inverse) {
    if (!is_pow2(w) || !is_pow2(h)) throw std::invalid_argument("fft_2d: dimensions must be powers of two");
    if (grid.size() != static_cast<std::size_t>(w) * h)
        throw std::invalid_argument("fft_2d: grid size mismatch");

    std::vector<std::complex<double>> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        const std::size_t off = static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = grid[off + x];
        fft_inplace(row, inverse);
        for (int x = 0; x < w; ++x) grid[off + x] = row[static_cast<std::size_t>(x)];
    }
    std::vector<std::complex<double>> col(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
        fft_inplace(col, inverse);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = col[static_cast<std::size_t>(y)];
    }
}

}  // namespace pixellens::fftops
