// Orthonormal discrete Fourier transforms: iterative radix-2 for power-of-two
// lengths, direct DFT otherwise. Each 1-D pass scales by 1/sqrt(n), so the
// 2-D transform is unitary and Parseval holds exactly.
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::fft {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place radix-2 Cooley-Tukey, unnormalized. sign=-1 forward, +1 inverse.
inline void fft_radix2(cplx* a, int n, int sign) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / len;
        const cplx wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline void dft_direct(cplx* a, int n, int sign) {
    std::vector<cplx> out(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * M_PI * k * j / n;
            acc += a[j] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    for (int k = 0; k < n; ++k) a[k] = out[k];
}

inline void transform_1d(cplx* a, int n, int sign) {
    if (is_pow2(n))
        fft_radix2(a, n, sign);
    else
        dft_direct(a, n, sign);
}

// Applies the 1-D transform along rows then columns of an n x n grid, scaling
// by 1/sqrt(n) per pass.
inline void transform_2d(std::vector<cplx>& grid, int n, int sign) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<cplx> col(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        transform_1d(grid.data() + static_cast<size_t>(r) * n, n, sign);
        for (int c = 0; c < n; ++c) grid[static_cast<size_t>(r) * n + c] *= scale;
    }
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) col[r] = grid[static_cast<size_t>(r) * n + c];
        transform_1d(col.data(), n, sign);
        for (int r = 0; r < n; ++r) grid[static_cast<size_t>(r) * n + c] = col[r] * scale;
    }
}

}  // namespace detail

using Spectrum = std::vector<cplx>;  // n*n row-major

inline Spectrum fft2(const TensorValue& image) {
    if (image.ndim() != 2 || image.shape[0] != image.shape[1])
        throw ShapeError("fft2 expects a square image, got " + image.shape_str());
    const int n = image.shape[0];
    Spectrum grid(static_cast<size_t>(n) * n);
    for (long i = 0; i < image.numel(); ++i) grid[i] = cplx(image.data[i], 0.0);
    detail::transform_2d(grid, n, -1);
    return grid;
}

inline Spectrum fft2_complex(Spectrum grid, int n) {
    detail::transform_2d(grid, n, -1);
    return grid;
}

inline Spectrum ifft2(Spectrum spectrum, int n) {
    if (static_cast<long>(spectrum.size()) != static_cast<long>(n) * n)
        throw ShapeError("ifft2: spectrum size does not match n*n");
    detail::transform_2d(spectrum, n, +1);
    return spectrum;
}

inline TensorValue real_part(const Spectrum& grid, int n) {
    TensorValue out = TensorValue::zeros({n, n});
    for (long i = 0; i < out.numel(); ++i) out.data[i] = grid[i].real();
    return out;
}

inline double max_imag_abs(const Spectrum& grid) {
    double m = 0.0;
    for (const cplx& v : grid) m = std::max(m, std::abs(v.imag()));
    return m;
}

}  // namespace flowdn::fft
